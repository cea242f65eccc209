//! Two-round S-learner stack.
//!
//! The first-round model is fitted on randomized round-1 outcomes. The
//! second-round model is fitted on the items that survived round 1, weighted
//! by the inverse of their predicted chance of surviving, and it receives the
//! mean first-round propensity as an extra input.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{
    encode_round1, encode_round2, CouponConfig, CouponSet, ItemRecord, OutcomeRecord, Round,
    SchemaId, ROUND1_FEATURES, ROUND2_FEATURES, TREATMENT_COORDS,
};
use crate::error::{invalid, Error, Result};
use crate::learner::{
    self, grid_search, schema_mismatch, train, Dataset, GridSearch, LearnerConfig, Model,
};

pub const PAIR_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_IPW_EPSILON: f64 = 1e-3;

/// Which first-round propensity defines an item's chance of surviving round 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpwVariant {
    /// Mean prediction over all round-1 arms.
    #[default]
    MeanArms,
    /// Prediction for the arm the item actually received.
    AppliedArm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpwSettings {
    pub epsilon: f64,
    pub variant: IpwVariant,
}

impl Default for IpwSettings {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_IPW_EPSILON,
            variant: IpwVariant::MeanArms,
        }
    }
}

impl IpwSettings {
    /// Settings that give every sample weight 1.
    pub fn unweighted() -> Self {
        Self {
            epsilon: 1.0,
            variant: IpwVariant::MeanArms,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(invalid(format!(
                "ipw epsilon {} must be in (0, 1]",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// `1 / clamp(1 - p, epsilon, 1)`.
pub fn ipw_weight(p_sold: f64, epsilon: f64) -> f64 {
    1.0 / (1.0 - p_sold).clamp(epsilon, 1.0)
}

/// Treatment-by-context product terms for the S-learner: every coupon
/// coordinate times every item/timing coordinate (and the round-1 mean in round 2).
pub fn treatment_interactions(round: Round) -> Vec<(usize, usize)> {
    let mut context: Vec<usize> = (0..8).collect();
    if round == Round::Second {
        context.push(ROUND1_FEATURES.len());
    }
    TREATMENT_COORDS
        .iter()
        .flat_map(|&t| context.iter().map(move |&c| (t, c)))
        .collect()
}

pub fn with_treatment_interactions(config: &LearnerConfig, round: Round) -> LearnerConfig {
    LearnerConfig {
        interactions: treatment_interactions(round),
        ..config.clone()
    }
}

fn index_items(items: &[ItemRecord]) -> HashMap<&str, &ItemRecord> {
    items.iter().map(|it| (it.item_id.as_str(), it)).collect()
}

fn lookup<'a>(index: &HashMap<&str, &'a ItemRecord>, id: &str) -> Result<&'a ItemRecord> {
    index
        .get(id)
        .copied()
        .ok_or_else(|| invalid(format!("log references unknown item {id}")))
}

/// Trains on `data`, or returns the prior when every label is the same.
fn fit_or_prior(data: &Dataset, config: &LearnerConfig) -> Result<Model> {
    if data.is_single_class() {
        return Ok(Model::constant(
            data.schema.clone(),
            data.n_features,
            data.positive_rate(),
            config,
        ));
    }
    train(data, config)
}

fn check_arms(log: &[OutcomeRecord], round: Round) -> Result<()> {
    let mut arms: Vec<CouponConfig> = Vec::new();
    for r in log {
        if !arms.contains(&r.coupon) {
            arms.push(r.coupon);
        }
    }
    if arms.len() < 2 || !arms.iter().any(CouponConfig::is_none) {
        return Err(Error::Unidentifiable(format!(
            "round-{} log has {} distinct arm(s); need the no-coupon arm and at least one coupon",
            round.number(),
            arms.len()
        )));
    }
    Ok(())
}

pub fn round1_dataset(log: &[OutcomeRecord], items: &[ItemRecord]) -> Result<Dataset> {
    let index = index_items(items);
    let mut data = Dataset::new(SchemaId::round1(), ROUND1_FEATURES.len());
    for r in log {
        if r.round != Round::First {
            return Err(invalid("round-1 log contains a round-2 record"));
        }
        let item = lookup(&index, &r.item_id)?;
        let fv = encode_round1(item, &r.coupon, r.attach_delay_h)?;
        data.push_vector(&fv, r.sold, 1.0)?;
    }
    Ok(data)
}

/// S-learner for round 1: one unweighted model over (item, applied coupon, delay).
pub fn fit_first_round(
    round1_log: &[OutcomeRecord],
    items: &[ItemRecord],
    config: &LearnerConfig,
) -> Result<Model> {
    check_arms(round1_log, Round::First)?;
    fit_or_prior(&round1_dataset(round1_log, items)?, config)
}

/// Round-1 predictions for every arm of `set1`.
pub fn first_round_vector(
    first: &Model,
    set1: &CouponSet,
    item: &ItemRecord,
    attach_delay_h: f64,
) -> Result<Vec<f64>> {
    set1.arms()
        .iter()
        .map(|arm| learner::predict(first, &encode_round1(item, arm, attach_delay_h)?))
        .collect()
}

/// Predicted round-1 uplift of an item: mean over real coupons of
/// `p(coupon) - p(none)`.
pub fn first_round_uplift(
    first: &Model,
    set1: &CouponSet,
    item: &ItemRecord,
    attach_delay_h: f64,
) -> Result<f64> {
    let p = first_round_vector(first, set1, item, attach_delay_h)?;
    Ok(mean(&p[1..]) - p[0])
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// A round-1 survivor with the treatment it received in round 1.
#[derive(Clone, Copy, Debug)]
pub struct Survivor<'a> {
    pub item: &'a ItemRecord,
    pub coupon: CouponConfig,
    pub attach_delay_h: f64,
}

pub fn ipw_weights(
    first: &Model,
    set1: &CouponSet,
    survivors: &[Survivor<'_>],
    settings: &IpwSettings,
) -> Result<Vec<f64>> {
    settings.validate()?;
    survivors
        .iter()
        .map(|s| {
            let p = match settings.variant {
                IpwVariant::MeanArms => {
                    mean(&first_round_vector(first, set1, s.item, s.attach_delay_h)?)
                }
                IpwVariant::AppliedArm => {
                    learner::predict(first, &encode_round1(s.item, &s.coupon, s.attach_delay_h)?)?
                }
            };
            Ok(ipw_weight(p, settings.epsilon))
        })
        .collect()
}

/// Round-2 dataset: survivors encoded with their mean round-1 propensity,
/// weighted by inverse survival probability.
pub fn round2_dataset(
    round1_log: &[OutcomeRecord],
    round2_log: &[OutcomeRecord],
    items: &[ItemRecord],
    first: &Model,
    set1: &CouponSet,
    ipw: &IpwSettings,
) -> Result<Dataset> {
    ipw.validate()?;
    let index = index_items(items);
    let r1: HashMap<&str, &OutcomeRecord> =
        round1_log.iter().map(|r| (r.item_id.as_str(), r)).collect();
    let mut data = Dataset::new(SchemaId::round2(), ROUND2_FEATURES.len());
    for r in round2_log {
        if r.round != Round::Second {
            return Err(invalid("round-2 log contains a round-1 record"));
        }
        let item = lookup(&index, &r.item_id)?;
        let prev = r1
            .get(r.item_id.as_str())
            .ok_or_else(|| invalid(format!("round-2 item {} has no round-1 record", r.item_id)))?;
        if prev.sold {
            return Err(Error::Contract(format!(
                "item {} sold in round 1 but appears in the round-2 log",
                r.item_id
            )));
        }
        let p1 = first_round_vector(first, set1, item, prev.attach_delay_h)?;
        let mean_p1 = mean(&p1);
        let p_survive = match ipw.variant {
            IpwVariant::MeanArms => mean_p1,
            IpwVariant::AppliedArm => learner::predict(
                first,
                &encode_round1(item, &prev.coupon, prev.attach_delay_h)?,
            )?,
        };
        let fv = encode_round2(item, &r.coupon, mean_p1)?;
        data.push_vector(&fv, r.sold, ipw_weight(p_survive, ipw.epsilon))?;
    }
    Ok(data)
}

/// S-learner for round 2 trained on survivors with inverse-propensity weights.
pub fn fit_second_round(
    round1_log: &[OutcomeRecord],
    round2_log: &[OutcomeRecord],
    items: &[ItemRecord],
    first: &Model,
    set1: &CouponSet,
    config: &LearnerConfig,
    ipw: &IpwSettings,
) -> Result<Model> {
    if round2_log.is_empty() {
        return Err(invalid(
            "round-2 log is empty; nothing to train the second-round model on",
        ));
    }
    check_arms(round2_log, Round::Second)?;
    let data = round2_dataset(round1_log, round2_log, items, first, set1, ipw)?;
    fit_or_prior(&data, config)
}

/// Options for [`train_pair`].
#[derive(Clone, Debug, PartialEq)]
pub struct PairTrainingOptions {
    pub grid: Vec<LearnerConfig>,
    pub k_folds: usize,
    pub seed: u64,
    /// Append the treatment-by-context products to every grid entry.
    pub treatment_interactions: bool,
    pub ipw: IpwSettings,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairTraining {
    pub pair: PredictorPair,
    pub first_grid: GridSearch,
    pub second_grid: GridSearch,
}

fn round_grid(opts: &PairTrainingOptions, round: Round) -> Vec<LearnerConfig> {
    opts.grid
        .iter()
        .map(|c| {
            let c = if opts.treatment_interactions {
                with_treatment_interactions(c, round)
            } else {
                c.clone()
            };
            LearnerConfig {
                rng_seed: opts.seed,
                ..c
            }
        })
        .collect()
}

/// Cross-validated grid search and fit for both rounds from RCT logs.
pub fn train_pair(
    round1_log: &[OutcomeRecord],
    round2_log: &[OutcomeRecord],
    items: &[ItemRecord],
    set1: &CouponSet,
    set2: &CouponSet,
    opts: &PairTrainingOptions,
) -> Result<PairTraining> {
    opts.ipw.validate()?;
    check_arms(round1_log, Round::First)?;
    if round2_log.is_empty() {
        return Err(invalid(
            "round-2 log is empty; nothing to train the second-round model on",
        ));
    }
    check_arms(round2_log, Round::Second)?;

    let d1 = round1_dataset(round1_log, items)?;
    let first_grid = grid_search(
        &d1,
        &round_grid(opts, Round::First),
        opts.k_folds,
        opts.seed,
    )?;
    let first = fit_or_prior(&d1, &first_grid.best)?;

    let d2 = round2_dataset(round1_log, round2_log, items, &first, set1, &opts.ipw)?;
    let second_grid = grid_search(
        &d2,
        &round_grid(opts, Round::Second),
        opts.k_folds,
        opts.seed,
    )?;
    let second = fit_or_prior(&d2, &second_grid.best)?;

    Ok(PairTraining {
        pair: PredictorPair::new(first, second, set1.clone(), set2.clone(), opts.ipw)?,
        first_grid,
        second_grid,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictorPair {
    pub first: Model,
    pub second: Model,
    pub round1_set: CouponSet,
    pub round2_set: CouponSet,
    pub ipw: IpwSettings,
}

#[derive(Serialize, Deserialize)]
struct PairManifest {
    format_version: u32,
    first_model: String,
    second_model: String,
    first_schema: SchemaId,
    second_schema: SchemaId,
    round1_arms: Vec<String>,
    round2_arms: Vec<String>,
    ipw_epsilon: f64,
    ipw_variant: IpwVariant,
}

pub const PAIR_MANIFEST: &str = "pair.json";
const FIRST_FILE: &str = "first.model.json";
const SECOND_FILE: &str = "second.model.json";

impl PredictorPair {
    pub fn new(
        first: Model,
        second: Model,
        round1_set: CouponSet,
        round2_set: CouponSet,
        ipw: IpwSettings,
    ) -> Result<Self> {
        ipw.validate()?;
        let pair = Self {
            first,
            second,
            round1_set,
            round2_set,
            ipw,
        };
        pair.check_schemas()?;
        Ok(pair)
    }

    /// Both models must match the current encoders.
    pub fn check_schemas(&self) -> Result<()> {
        for (model, schema, width) in [
            (&self.first, SchemaId::round1(), ROUND1_FEATURES.len()),
            (&self.second, SchemaId::round2(), ROUND2_FEATURES.len()),
        ] {
            if model.schema != schema {
                return Err(schema_mismatch(&schema, &model.schema));
            }
            if model.n_features != width {
                return Err(Error::SchemaMismatch {
                    expected: format!("{schema} ({width} features)"),
                    found: format!("{} ({} features)", model.schema, model.n_features),
                });
            }
        }
        Ok(())
    }

    /// Writes the two model files and a manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(FIRST_FILE), self.first.to_json()?)?;
        fs::write(dir.join(SECOND_FILE), self.second.to_json()?)?;
        let manifest = PairManifest {
            format_version: PAIR_FORMAT_VERSION,
            first_model: FIRST_FILE.into(),
            second_model: SECOND_FILE.into(),
            first_schema: self.first.schema.clone(),
            second_schema: self.second.schema.clone(),
            round1_arms: self
                .round1_set
                .arms()
                .iter()
                .map(ToString::to_string)
                .collect(),
            round2_arms: self
                .round2_set
                .arms()
                .iter()
                .map(ToString::to_string)
                .collect(),
            ipw_epsilon: self.ipw.epsilon,
            ipw_variant: self.ipw.variant,
        };
        fs::write(
            dir.join(PAIR_MANIFEST),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: PairManifest =
            serde_json::from_str(&fs::read_to_string(dir.join(PAIR_MANIFEST))?)?;
        if manifest.format_version != PAIR_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "predictor pair format version {} is not supported",
                manifest.format_version
            )));
        }
        let first = Model::from_json(&fs::read_to_string(dir.join(&manifest.first_model))?)?;
        let second = Model::from_json(&fs::read_to_string(dir.join(&manifest.second_model))?)?;
        if first.schema != manifest.first_schema || second.schema != manifest.second_schema {
            return Err(Error::Parse(
                "model files disagree with the pair manifest".into(),
            ));
        }
        let parse_set = |role, arms: &[String]| -> Result<CouponSet> {
            let arms = arms.iter().map(|a| a.parse()).collect::<Result<Vec<_>>>()?;
            CouponSet::new(role, arms)
        };
        Self::new(
            first,
            second,
            parse_set(Round::First, &manifest.round1_arms)?,
            parse_set(Round::Second, &manifest.round2_arms)?,
            IpwSettings {
                epsilon: manifest.ipw_epsilon,
                variant: manifest.ipw_variant,
            },
        )
    }
}

/// Per-arm predictions for one item across both rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemPredictions {
    pub item_id: String,
    pub p1: Vec<f64>,
    pub mean_p1: f64,
    pub p2: Vec<f64>,
    /// Chance of selling with no coupon in either round.
    pub p_star: f64,
}

pub fn predict_item(
    pair: &PredictorPair,
    item: &ItemRecord,
    attach_delay_h: f64,
) -> Result<ItemPredictions> {
    let p1 = first_round_vector(&pair.first, &pair.round1_set, item, attach_delay_h)?;
    let mean_p1 = mean(&p1);
    let p2 = pair
        .round2_set
        .arms()
        .iter()
        .map(|arm| learner::predict(&pair.second, &encode_round2(item, arm, mean_p1)?))
        .collect::<Result<Vec<f64>>>()?;
    let p_star = p1[0] + (1.0 - p1[0]) * p2[0];
    Ok(ItemPredictions {
        item_id: item.item_id.clone(),
        p1,
        mean_p1,
        p2,
        p_star,
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::learner::{Params, MODEL_FORMAT_VERSION};

    /// Logistic model over raw features: `intercept + sum(coef[i] * x[i])`.
    pub fn linear_model(
        schema: SchemaId,
        n: usize,
        terms: &[(usize, f64)],
        intercept: f64,
    ) -> Model {
        let mut coefficients = vec![0.0; n];
        for &(i, c) in terms {
            coefficients[i] = c;
        }
        Model {
            format_version: MODEL_FORMAT_VERSION,
            schema,
            n_features: n,
            interactions: Vec::new(),
            feature_mean: vec![0.0; n],
            feature_scale: vec![1.0; n],
            params: Params::Logistic {
                coefficients,
                intercept,
            },
            config: LearnerConfig::default(),
        }
    }

    pub fn small_set(role: Round) -> CouponSet {
        CouponSet::new(
            role,
            vec![
                CouponConfig::NONE,
                CouponConfig::new(5, 10.0, 1000).unwrap(),
                CouponConfig::new(10, 10.0, 1000).unwrap(),
            ],
        )
        .unwrap()
    }

    /// First round: logit = -1 + 0.1 * discount.
    /// Second round: logit = -2 + 0.05 * discount + mean_p1.
    pub fn pair() -> PredictorPair {
        PredictorPair::new(
            linear_model(SchemaId::round1(), 11, &[(8, 0.1)], -1.0),
            linear_model(SchemaId::round2(), 12, &[(8, 0.05), (11, 1.0)], -2.0),
            small_set(Round::First),
            small_set(Round::Second),
            IpwSettings::default(),
        )
        .unwrap()
    }
}
