//! Run configuration: one TOML document with a section per pipeline stage.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use seqcoupon::uplift::PairTrainingOptions;
use seqcoupon::{
    CouponConfig, CouponSet, IpwSettings, IpwVariant, LearnerConfig, PolicyConstraint, Round,
    SimConfig, Yen,
};

use crate::exit::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouponsSection {
    /// Round-1 arms; the first must be `none`.
    pub round1: Vec<String>,
    pub round2: Vec<String>,
}

impl Default for CouponsSection {
    fn default() -> Self {
        let arms = |r| {
            CouponSet::default_grid(r)
                .arms()
                .iter()
                .map(ToString::to_string)
                .collect()
        };
        Self {
            round1: arms(Round::First),
            round2: arms(Round::Second),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSection {
    pub k_folds: usize,
    /// Append treatment-by-context products to every grid entry.
    pub treatment_interactions: bool,
    pub grid: Vec<LearnerConfig>,
}

impl Default for LearnerSection {
    fn default() -> Self {
        Self {
            k_folds: 3,
            treatment_interactions: true,
            grid: vec![
                LearnerConfig {
                    l2: 1e-4,
                    ..LearnerConfig::default()
                },
                LearnerConfig {
                    l2: 1.0,
                    ..LearnerConfig::default()
                },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub lift_threshold: f64,
    pub attach_delay_h: f64,
    pub ipw_epsilon: f64,
    pub ipw_variant: IpwVariant,
    /// Use this LTV for every item instead of the seller's.
    pub ltv_override: Option<Yen>,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            lift_threshold: 0.02,
            attach_delay_h: 2.0,
            ipw_epsilon: IpwSettings::default().epsilon,
            ipw_variant: IpwVariant::default(),
            ltv_override: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RctSection {
    /// Share of items assigned the no-coupon arm in each round.
    pub holdout_prob: f64,
}

impl Default for RctSection {
    fn default() -> Self {
        Self { holdout_prob: 0.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub deciles: usize,
    pub bootstrap_b: usize,
    /// Rollout seeds for `compare`.
    pub seeds: Vec<u64>,
    /// Catalog size per rollout seed.
    pub n_items: usize,
    pub bucket_width_h: f64,
    pub post_attach_horizon_h: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            deciles: 10,
            bootstrap_b: 200,
            seeds: (1..=10).collect(),
            n_items: 100_000,
            bucket_width_h: 2.0,
            post_attach_horizon_h: 72.0,
        }
    }
}

/// File names inside the output directory of each command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub catalog: String,
    pub round1_log: String,
    pub round2_log: String,
    pub model_dir: String,
    pub grid_table: String,
    pub plans: String,
    pub uplift_curve: String,
    pub delay_table: String,
    pub report: String,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            catalog: "catalog.csv".into(),
            round1_log: "rct_round1.csv".into(),
            round2_log: "rct_round2.csv".into(),
            model_dir: "model".into(),
            grid_table: "grid.csv".into(),
            plans: "plans.csv".into(),
            uplift_curve: "uplift_curve.csv".into(),
            delay_table: "delay.csv".into(),
            report: "comparison.txt".into(),
        }
    }
}

impl IoSection {
    fn entries(&self) -> [(&'static str, &str); 9] {
        [
            ("catalog", &self.catalog),
            ("round1_log", &self.round1_log),
            ("round2_log", &self.round2_log),
            ("model_dir", &self.model_dir),
            ("grid_table", &self.grid_table),
            ("plans", &self.plans),
            ("uplift_curve", &self.uplift_curve),
            ("delay_table", &self.delay_table),
            ("report", &self.report),
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub simulator: SimConfig,
    pub coupons: CouponsSection,
    pub learner: LearnerSection,
    pub policy: PolicySection,
    pub rct: RctSection,
    pub evaluation: EvaluationSection,
    pub io: IoSection,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => config_error(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("RunConfig serializes")
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.simulator.rng_seed = s;
        }
        self
    }

    pub fn validate(&self) -> CliResult<()> {
        self.simulator
            .validate()
            .map_err(|e| config_error(format!("[simulator] {e}")))?;
        self.coupon_sets()?;
        if self.learner.grid.is_empty() {
            return Err(config_error(
                "[learner] grid must contain at least one entry",
            ));
        }
        if self.learner.k_folds < 2 {
            return Err(config_error("[learner] k_folds must be >= 2"));
        }
        for (i, c) in self.learner.grid.iter().enumerate() {
            c.validate()
                .map_err(|e| config_error(format!("[learner] grid entry {i}: {e}")))?;
        }
        self.constraint()?;
        self.ipw()
            .validate()
            .map_err(|e| config_error(format!("[policy] {e}")))?;
        if !(self.policy.attach_delay_h.is_finite() && self.policy.attach_delay_h >= 0.0) {
            return Err(config_error("[policy] attach_delay_h must be >= 0"));
        }
        if !(self.rct.holdout_prob > 0.0 && self.rct.holdout_prob < 1.0) {
            return Err(config_error("[rct] holdout_prob must be in (0, 1)"));
        }
        let ev = &self.evaluation;
        if ev.deciles == 0 {
            return Err(config_error("[evaluation] deciles must be positive"));
        }
        if ev.bootstrap_b < 2 {
            return Err(config_error("[evaluation] bootstrap_b must be >= 2"));
        }
        if !(ev.bucket_width_h > 0.0 && ev.bucket_width_h.is_finite()) {
            return Err(config_error("[evaluation] bucket_width_h must be positive"));
        }
        if !(ev.post_attach_horizon_h > 0.0 && ev.post_attach_horizon_h.is_finite()) {
            return Err(config_error(
                "[evaluation] post_attach_horizon_h must be positive",
            ));
        }
        let mut seen = BTreeSet::new();
        for (key, path) in self.io.entries() {
            if path.is_empty() {
                return Err(config_error(format!("[io] {key} must not be empty")));
            }
            if !seen.insert(path) {
                return Err(config_error(format!("[io] {key} = {path:?} is used twice")));
            }
        }
        Ok(())
    }

    pub fn coupon_sets(&self) -> CliResult<(CouponSet, CouponSet)> {
        let parse = |key: &str, role, arms: &[String]| -> CliResult<CouponSet> {
            let arms = arms
                .iter()
                .map(|a| a.parse::<CouponConfig>())
                .collect::<seqcoupon::Result<Vec<_>>>()
                .map_err(|e| config_error(format!("[coupons] {key}: {e}")))?;
            CouponSet::new(role, arms).map_err(|e| config_error(format!("[coupons] {key}: {e}")))
        };
        Ok((
            parse("round1", Round::First, &self.coupons.round1)?,
            parse("round2", Round::Second, &self.coupons.round2)?,
        ))
    }

    pub fn constraint(&self) -> CliResult<PolicyConstraint> {
        PolicyConstraint::new(self.policy.lift_threshold, self.policy.ltv_override)
            .map_err(|e| config_error(format!("[policy] {e}")))
    }

    pub fn ipw(&self) -> IpwSettings {
        IpwSettings {
            epsilon: self.policy.ipw_epsilon,
            variant: self.policy.ipw_variant,
        }
    }

    pub fn training_options(&self) -> PairTrainingOptions {
        PairTrainingOptions {
            grid: self.learner.grid.clone(),
            k_folds: self.learner.k_folds,
            seed: self.simulator.rng_seed,
            treatment_interactions: self.learner.treatment_interactions,
            ipw: self.ipw(),
        }
    }
}
