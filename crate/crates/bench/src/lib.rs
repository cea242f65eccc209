//! Shared fixtures for the pipeline benchmarks.

use seqcoupon::simulator::AssignmentProbs;
use seqcoupon::uplift::PairTrainingOptions;
use seqcoupon::{
    generate_catalog, run_rct, train_pair, CouponSet, GroundTruth, IpwSettings, ItemRecord,
    LearnerConfig, OutcomeRecord, PredictorPair, Round, SimConfig,
};

pub struct Fixture {
    pub cfg: SimConfig,
    pub gt: GroundTruth,
    pub items: Vec<ItemRecord>,
    pub set1: CouponSet,
    pub set2: CouponSet,
    pub probs: AssignmentProbs,
    pub round1: Vec<OutcomeRecord>,
    pub round2: Vec<OutcomeRecord>,
}

impl Fixture {
    /// Catalog and randomized trial of `n` items with the default coupon grid.
    pub fn new(n: usize, seed: u64) -> Self {
        let cfg = SimConfig {
            n_items: n,
            rng_seed: seed,
            ..SimConfig::default()
        };
        let gt = GroundTruth::new(&cfg).expect("valid simulator config");
        let items = generate_catalog(&cfg).expect("catalog");
        let set1 = CouponSet::default_grid(Round::First);
        let set2 = CouponSet::default_grid(Round::Second);
        let probs = AssignmentProbs::with_holdout(&set1, &set2, 0.2);
        let logs = run_rct(&gt, &items, &set1, &set2, &probs, seed).expect("trial");
        Self {
            cfg,
            gt,
            items,
            set1,
            set2,
            probs,
            round1: logs.round1,
            round2: logs.round2,
        }
    }

    pub fn options(&self) -> PairTrainingOptions {
        PairTrainingOptions {
            grid: vec![LearnerConfig::default()],
            k_folds: 2,
            seed: self.cfg.rng_seed,
            treatment_interactions: true,
            ipw: IpwSettings::default(),
        }
    }

    pub fn train(&self) -> PredictorPair {
        train_pair(
            &self.round1,
            &self.round2,
            &self.items,
            &self.set1,
            &self.set2,
            &self.options(),
        )
        .expect("training")
        .pair
    }
}
