//! Training, prediction and planning over simulated RCT logs.

mod common;

use proptest::prelude::*;

use seqcoupon::decision::AllocationPlan;
use seqcoupon::uplift::{fit_first_round, ipw_weight, ipw_weights, round2_dataset, Survivor};
use seqcoupon::{
    allocate, allocate_independent, coupon_cost, predict_item, replan, roi, train, CouponConfig,
    CouponSet, IpwSettings, IpwVariant, ItemPredictions, LearnerConfig, OutcomeRecord,
    PolicyConstraint, PredictorPair, Roi, Round,
};

fn with_interactions(round: Round) -> LearnerConfig {
    seqcoupon::uplift::with_treatment_interactions(&LearnerConfig::default(), round)
}

#[test]
fn unit_epsilon_matches_unweighted_training() {
    let t = common::trial(6_000, 17);
    let first = fit_first_round(&t.round1, &t.items, &with_interactions(Round::First)).unwrap();
    let ipw = IpwSettings::unweighted();
    let weighted = round2_dataset(&t.round1, &t.round2, &t.items, &first, &t.set1, &ipw).unwrap();
    let ones = weighted.with_weights(vec![1.0; weighted.len()]).unwrap();
    assert_eq!(weighted, ones);
    let cfg = with_interactions(Round::Second);
    let a = train(&weighted, &cfg).unwrap().to_json().unwrap();
    let b = train(&ones, &cfg).unwrap().to_json().unwrap();
    assert_eq!(a, b);
}

#[test]
fn ipw_weights_are_bounded_and_monotone() {
    let eps = 1e-3;
    let mut last = 0.0;
    for i in 0..=1000 {
        let p = f64::from(i) / 1000.0;
        let w = ipw_weight(p, eps);
        assert!((1.0..=1.0 / eps).contains(&w));
        assert!(w >= last);
        last = w;
    }
    assert_eq!(ipw_weight(0.0, eps), 1.0);
    assert_eq!(ipw_weight(1.0, eps), 1.0 / eps);

    let t = common::trial(3_000, 19);
    let first = fit_first_round(&t.round1, &t.items, &with_interactions(Round::First)).unwrap();
    let by_id: std::collections::HashMap<&str, _> =
        t.items.iter().map(|i| (i.item_id.as_str(), i)).collect();
    let survivors: Vec<Survivor<'_>> = t
        .round1
        .iter()
        .filter(|r| !r.sold)
        .map(|r| Survivor {
            item: by_id[r.item_id.as_str()],
            coupon: r.coupon,
            attach_delay_h: r.attach_delay_h,
        })
        .collect();
    for variant in [IpwVariant::MeanArms, IpwVariant::AppliedArm] {
        let ipw = IpwSettings {
            epsilon: eps,
            variant,
        };
        let w = ipw_weights(&first, &t.set1, &survivors, &ipw).unwrap();
        assert_eq!(w.len(), survivors.len());
        assert!(w.iter().all(|w| (1.0..=1.0 / eps).contains(w)));
        assert!(w.iter().any(|w| *w > 1.0));
    }
    let bad = IpwSettings {
        epsilon: 0.0,
        variant: IpwVariant::MeanArms,
    };
    assert!(ipw_weights(&first, &t.set1, &survivors, &bad).is_err());
}

#[test]
fn retraining_is_deterministic_and_round_trips() {
    let t = common::trial(4_000, 23);
    let a = common::train(&t, IpwSettings::default());
    let b = common::train(&t, IpwSettings::default());
    assert_eq!(
        a.pair.first.to_json().unwrap(),
        b.pair.first.to_json().unwrap()
    );
    assert_eq!(
        a.pair.second.to_json().unwrap(),
        b.pair.second.to_json().unwrap()
    );
    assert_eq!(a.first_grid, b.first_grid);

    let dir = tempfile_dir();
    a.pair.save(&dir).unwrap();
    let loaded = PredictorPair::load(&dir).unwrap();
    for item in t.items.iter().take(200) {
        let x = predict_item(&a.pair, item, 2.0).unwrap();
        let y = predict_item(&loaded, item, 2.0).unwrap();
        for (p, q) in x.p1.iter().chain(&x.p2).zip(y.p1.iter().chain(&y.p2)) {
            assert!((p - q).abs() <= 1e-12);
        }
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("seqcoupon-pipeline-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn item_predictions_are_consistent() {
    let t = common::trial(4_000, 29);
    let pair = common::train(&t, IpwSettings::default()).pair;
    for item in t.items.iter().take(500) {
        let p = predict_item(&pair, item, 2.0).unwrap();
        assert_eq!(p.item_id, item.item_id);
        assert_eq!(p.p1.len(), t.set1.len());
        assert_eq!(p.p2.len(), t.set2.len());
        for v in p.p1.iter().chain(&p.p2) {
            assert!((1e-6..=1.0 - 1e-6).contains(v), "{v}");
        }
        let mean = p.p1.iter().sum::<f64>() / p.p1.len() as f64;
        assert!((p.mean_p1 - mean).abs() < 1e-12);
        assert_eq!(p.p_star, p.p1[0] + (1.0 - p.p1[0]) * p.p2[0]);
        assert_eq!(p, predict_item(&pair, item, 2.0).unwrap());
    }
}

#[test]
fn replanning_ages_the_item() {
    let t = common::trial(4_000, 37);
    let pair = common::train(&t, IpwSettings::default()).pair;
    let constraint = PolicyConstraint::new(0.02, None).unwrap();
    let gap_days = seqcoupon::domain::ROUND_GAP_HOURS / 24.0;
    let rounds = (30.0 / gap_days).round() as usize;
    for item in t.items.iter().take(100) {
        let history: Vec<OutcomeRecord> = (0..rounds)
            .map(|r| {
                let round = if r % 2 == 0 {
                    Round::First
                } else {
                    Round::Second
                };
                OutcomeRecord::unsold(&item.item_id, round, CouponConfig::NONE, 2.0)
            })
            .collect();
        let plan = replan(item, &history, &pair, &constraint, 2.0).unwrap();
        assert_eq!(
            plan,
            replan(item, &history, &pair, &constraint, 2.0).unwrap()
        );
        assert_eq!(plan.feasible, plan.lift >= constraint.lift_threshold);

        let mut aged = item.clone();
        aged.age_days += rounds as f64 * gap_days;
        let preds = predict_item(&pair, &aged, 2.0).unwrap();
        let direct = allocate(&preds, &aged, &t.set1, &t.set2, &constraint, 2.0).unwrap();
        assert_eq!(plan, direct);
    }
    let mut sold =
        OutcomeRecord::unsold(&t.items[0].item_id, Round::First, CouponConfig::NONE, 2.0);
    sold.sold = true;
    assert!(replan(&t.items[0], &[sold], &pair, &constraint, 2.0).is_err());
}

/// Per-round choice by exhaustive ranking: feasible arms by (ROI desc, cost asc,
/// index asc), falling back to (lift desc, cost asc, index asc).
fn brute_round(p: &[f64], costs: &[f64], ltv: f64, threshold: f64) -> usize {
    let mut arms: Vec<(usize, f64, Roi, f64)> = (1..p.len())
        .map(|a| {
            (
                a,
                p[a] - p[0],
                roi(p[a], p[0], ltv, costs[a]).unwrap(),
                costs[a],
            )
        })
        .collect();
    let feasible: Vec<_> = arms.iter().filter(|a| a.1 >= threshold).cloned().collect();
    if !feasible.is_empty() {
        let mut f = feasible;
        f.sort_by(|x, y| {
            y.2.partial_cmp(&x.2)
                .unwrap()
                .then(x.3.total_cmp(&y.3))
                .then(x.0.cmp(&y.0))
        });
        return f[0].0;
    }
    arms.sort_by(|x, y| {
        y.1.total_cmp(&x.1)
            .then(x.3.total_cmp(&y.3))
            .then(x.0.cmp(&y.0))
    });
    arms[0].0
}

fn quantized(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((1u32..20).prop_map(|q| f64::from(q) / 20.0), k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn independent_baseline_matches_exhaustive_ranking(
        p1 in quantized(7),
        p2 in quantized(7),
        price in prop::sample::select(vec![10i64, 400, 3000, 25_000]),
        threshold in prop::sample::select(vec![0.0, 0.05, 0.2, 0.6]),
    ) {
        let set1 = CouponSet::default_grid(Round::First);
        let set2 = CouponSet::default_grid(Round::Second);
        let t = common::trial(1, 1);
        let mut item = t.items[0].clone();
        item.price_yen = price;
        let constraint = PolicyConstraint::new(threshold, None).unwrap();
        let preds = ItemPredictions {
            item_id: item.item_id.clone(),
            mean_p1: p1.iter().sum::<f64>() / p1.len() as f64,
            p_star: p1[0] + (1.0 - p1[0]) * p2[0],
            p1: p1.clone(),
            p2: p2.clone(),
        };
        let plan: AllocationPlan =
            allocate_independent(&preds, &item, &set1, &set2, &constraint, 2.0).unwrap();
        let costs = |s: &CouponSet| -> Vec<f64> {
            s.arms().iter().map(|a| coupon_cost(a, price).unwrap() as f64).collect()
        };
        let ltv = item.seller_ltv_yen as f64;
        prop_assert_eq!(plan.j, brute_round(&p1, &costs(&set1), ltv, threshold));
        prop_assert_eq!(plan.k, brute_round(&p2, &costs(&set2), ltv, threshold));
        prop_assert_eq!(plan.feasible, plan.lift >= threshold);
        prop_assert!(plan.j > 0 && plan.k > 0);
    }
}
