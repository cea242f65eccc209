#![allow(dead_code)]

use seqcoupon::simulator::AssignmentProbs;
use seqcoupon::uplift::{PairTraining, PairTrainingOptions};
use seqcoupon::{
    generate_catalog, run_rct, train_pair, CouponSet, GroundTruth, IpwSettings, ItemRecord,
    LearnerConfig, OutcomeRecord, Round, SimConfig,
};

pub struct Trial {
    pub cfg: SimConfig,
    pub gt: GroundTruth,
    pub items: Vec<ItemRecord>,
    pub round1: Vec<OutcomeRecord>,
    pub round2: Vec<OutcomeRecord>,
    pub set1: CouponSet,
    pub set2: CouponSet,
}

pub fn trial(n: usize, seed: u64) -> Trial {
    let cfg = SimConfig {
        n_items: n,
        rng_seed: seed,
        ..SimConfig::default()
    };
    let items = generate_catalog(&cfg).unwrap();
    let gt = GroundTruth::new(&cfg).unwrap();
    let set1 = CouponSet::default_grid(Round::First);
    let set2 = CouponSet::default_grid(Round::Second);
    let probs = AssignmentProbs::with_holdout(&set1, &set2, 0.2);
    let logs = run_rct(&gt, &items, &set1, &set2, &probs, seed).unwrap();
    Trial {
        cfg,
        gt,
        items,
        round1: logs.round1,
        round2: logs.round2,
        set1,
        set2,
    }
}

pub fn options(ipw: IpwSettings, seed: u64) -> PairTrainingOptions {
    PairTrainingOptions {
        grid: vec![LearnerConfig::default()],
        k_folds: 2,
        seed,
        treatment_interactions: true,
        ipw,
    }
}

pub fn train(t: &Trial, ipw: IpwSettings) -> PairTraining {
    train_pair(
        &t.round1,
        &t.round2,
        &t.items,
        &t.set1,
        &t.set2,
        &options(ipw, t.cfg.rng_seed),
    )
    .unwrap()
}
