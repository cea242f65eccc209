//! Statistical checks of the simulator against its own structural model.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use seqcoupon::simulator::{rollout_policy, AssignmentProbs, PolicyAction};
use seqcoupon::{
    coupon_cost, generate_catalog, run_rct, CouponConfig, CouponSet, GroundTruth, Round, SimConfig,
};

fn sim(n: usize, seed: u64) -> SimConfig {
    SimConfig {
        n_items: n,
        rng_seed: seed,
        ..SimConfig::default()
    }
}

fn grid() -> (CouponSet, CouponSet) {
    (
        CouponSet::default_grid(Round::First),
        CouponSet::default_grid(Round::Second),
    )
}

#[test]
fn mean_log_price_within_three_sigma() {
    let cfg = sim(1000, 42);
    let items = generate_catalog(&cfg).unwrap();
    let n = items.len() as f64;
    let mean = items.iter().map(|i| (i.price_yen as f64).ln()).sum::<f64>() / n;
    // Rounding to whole yen shifts ln(price) by far less than the bound.
    let bound = 3.0 * cfg.price_log_sigma / n.sqrt();
    assert!(
        (mean - cfg.price_log_mu).abs() < bound,
        "{mean} vs {}",
        cfg.price_log_mu
    );
}

#[test]
fn catalog_fields_follow_their_distributions() {
    let cfg = sim(20_000, 3);
    let items = generate_catalog(&cfg).unwrap();
    let n = items.len() as f64;
    let likes = items.iter().map(|i| f64::from(i.likes)).sum::<f64>() / n;
    assert!((likes - cfg.likes_mean).abs() < 3.0 * (cfg.likes_mean / n).sqrt());
    let mut cond = [0usize; 5];
    for it in &items {
        cond[usize::from(it.condition) - 1] += 1;
        assert!(it.age_days >= 0.0 && it.age_days < cfg.max_age_days);
        assert!((0.0..1.0).contains(&it.season_phase));
    }
    let expected = n / 5.0;
    let chi2: f64 = cond
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let p = 1.0 - ChiSquared::new(4.0).unwrap().cdf(chi2);
    assert!(p > 0.001, "condition chi2 p = {p}");
}

#[test]
fn arm_frequencies_match_assignment() {
    let cfg = sim(100_000, 11);
    let items = generate_catalog(&cfg).unwrap();
    let gt = GroundTruth::new(&cfg).unwrap();
    let (s1, s2) = grid();
    let probs = AssignmentProbs::with_holdout(&s1, &s2, 0.2);
    let logs = run_rct(&gt, &items, &s1, &s2, &probs, 11).unwrap();
    for (log, set, p) in [
        (&logs.round1, &s1, &probs.round1),
        (&logs.round2, &s2, &probs.round2),
    ] {
        let mut counts = vec![0usize; set.len()];
        for r in log {
            counts[set.position(&r.coupon).unwrap()] += 1;
        }
        let n = log.len() as f64;
        let chi2: f64 = counts
            .iter()
            .zip(p)
            .map(|(&c, &q)| (c as f64 - n * q).powi(2) / (n * q))
            .sum();
        let pval = 1.0 - ChiSquared::new((set.len() - 1) as f64).unwrap().cdf(chi2);
        assert!(pval > 0.001, "chi2 p = {pval}, counts {counts:?}");
    }
}

#[test]
fn no_coupon_sale_rate_matches_truth() {
    let cfg = sim(50_000, 5);
    let items = generate_catalog(&cfg).unwrap();
    let gt = GroundTruth::new(&cfg).unwrap();
    let (s1, s2) = grid();
    let mut all_none = vec![0.0; s1.len()];
    all_none[0] = 1.0;
    let probs = AssignmentProbs {
        round1: all_none.clone(),
        round2: all_none,
    };
    let logs = run_rct(&gt, &items, &s1, &s2, &probs, 5).unwrap();
    let index: std::collections::HashMap<&str, _> =
        items.iter().map(|i| (i.item_id.as_str(), i)).collect();
    let ps: Vec<f64> = logs
        .round1
        .iter()
        .map(|r| {
            let item = index[r.item_id.as_str()];
            gt.true_propensity(item, &CouponConfig::NONE, Round::First, r.attach_delay_h)
        })
        .collect();
    let expected: f64 = ps.iter().sum::<f64>() / ps.len() as f64;
    let var: f64 = ps.iter().map(|p| p * (1.0 - p)).sum::<f64>() / (ps.len() as f64).powi(2);
    let observed = logs.round1.iter().filter(|r| r.sold).count() as f64 / ps.len() as f64;
    assert!(
        (observed - expected).abs() < 3.0 * var.sqrt(),
        "{observed} vs {expected}"
    );
}

#[test]
fn rct_partitions_items_and_records_are_consistent() {
    let cfg = sim(5_000, 8);
    let items = generate_catalog(&cfg).unwrap();
    let gt = GroundTruth::new(&cfg).unwrap();
    let (s1, s2) = grid();
    let probs = AssignmentProbs::with_holdout(&s1, &s2, 0.2);
    let logs = run_rct(&gt, &items, &s1, &s2, &probs, 8).unwrap();
    assert_eq!(logs.round1.len(), items.len());
    let sold: Vec<&str> = logs
        .round1
        .iter()
        .filter(|r| r.sold)
        .map(|r| r.item_id.as_str())
        .collect();
    assert_eq!(sold.len() + logs.survivors.len(), items.len());
    assert!(logs.survivors.iter().all(|s| !sold.contains(&s.as_str())));
    let r2_ids: Vec<&String> = logs.round2.iter().map(|r| &r.item_id).collect();
    assert_eq!(r2_ids, logs.survivors.iter().collect::<Vec<_>>());
    let price: std::collections::HashMap<&str, i64> = items
        .iter()
        .map(|i| (i.item_id.as_str(), i.price_yen))
        .collect();
    for r in logs.round1.iter().chain(&logs.round2) {
        r.validate().unwrap();
        if r.sold {
            let t = r.purchase_delay_h.unwrap();
            if !r.coupon.is_none() {
                assert!(t <= r.coupon.validity_hours);
            }
            assert_eq!(
                r.coupon_cost_yen.unwrap(),
                coupon_cost(&r.coupon, price[r.item_id.as_str()]).unwrap()
            );
        }
    }
    assert_eq!(logs, run_rct(&gt, &items, &s1, &s2, &probs, 8).unwrap());
}

#[test]
fn coupons_sell_more_than_no_coupons() {
    let cfg = sim(50_000, 21);
    let items = generate_catalog(&cfg).unwrap();
    let gt = GroundTruth::new(&cfg).unwrap();
    let c15 = CouponConfig::new(15, 72.0, 1000).unwrap();
    let none = rollout_policy(&gt, &items, |_| PolicyAction::no_coupon(2.0), 21).unwrap();
    let coupon = rollout_policy(
        &gt,
        &items,
        |_| PolicyAction {
            round1: c15,
            attach_delay_h: 2.0,
            round2: c15,
        },
        21,
    )
    .unwrap();
    assert_eq!(none.totals.coupon_cost_yen, 0);
    assert!(coupon.totals.sales > none.totals.sales);
    let again = rollout_policy(&gt, &items, |_| PolicyAction::no_coupon(2.0), 21).unwrap();
    assert_eq!(again.totals, none.totals);
    let sales = none.records.iter().filter(|r| r.sold).count();
    assert_eq!(sales, none.totals.sales);
}

#[test]
fn pricier_items_take_longer_to_sell() {
    let cfg = SimConfig::default();
    let gt = GroundTruth::new(&cfg).unwrap();
    let items = generate_catalog(&sim(200, 1)).unwrap();
    let mut cheap = items[0].clone();
    cheap.price_yen = 500;
    let mut pricey = items[0].clone();
    pricey.price_yen = 50_000;
    assert!(gt.purchase_rate(&cheap) > gt.purchase_rate(&pricey));
}
