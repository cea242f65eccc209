use seqcoupon::{predict_item, PolicyConstraint};
use seqcoupon_bench::Fixture;

#[test]
fn fixture_is_deterministic_and_trainable() {
    let a = Fixture::new(1_500, 4);
    let b = Fixture::new(1_500, 4);
    assert_eq!(a.items, b.items);
    assert_eq!(a.round1, b.round1);
    assert_eq!(a.round1.len(), 1_500);
    let pair = a.train();
    let p = predict_item(&pair, &a.items[0], 2.0).unwrap();
    assert_eq!(p.p1.len(), a.set1.len());
    let c = PolicyConstraint::new(0.02, None).unwrap();
    seqcoupon::allocate(&p, &a.items[0], &a.set1, &a.set2, &c, 2.0).unwrap();
}
