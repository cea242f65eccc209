//! Synthetic single-stock marketplace with a declared structural sale model.
//!
//! Sale propensity for an item under coupon `c` in round `r`, attached
//! `delay` hours after the key action:
//!
//! ```text
//! p = sigmoid(b_r + w . z(item, r) + alpha * pct(c) * e(item) * d(delay))
//! e(item)  = 0.5 + min(likes, 10) / 10
//! d(delay) = 1 up to the knee, then linear down to the floor at `delay_floor_at_h`
//! ```
//!
//! `z` is the simulator's own item representation. It deliberately differs
//! from the learner encoding (demand enters as a hinge `max(demand, 0)`), so
//! the learners are misspecified in a way that correlates with round-1 sales.
//!
//! A coupon sale only counts when the purchase happens inside the validity
//! window. Purchase time after attach is exponential with rate
//! `purchase_time_rate / (1 + ln(price / 1000 + 1))`.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::domain::{
    coupon_cost, CouponConfig, CouponSet, ItemRecord, ItemStatus, OutcomeRecord, Round, Yen,
    ROUND_GAP_HOURS,
};
use crate::error::{invalid, Result};
use crate::rng::{key_str, purpose, substream};

/// Number of entries in the simulator's item representation `z`.
pub const N_TRUTH_FEATURES: usize = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_items: usize,
    pub rng_seed: u64,
    pub base_logit_r1: f64,
    pub base_logit_r2: f64,
    /// Weights on z: log-price (centred), condition, age/30d, capped likes,
    /// demand hinge, season sin, season cos.
    pub feature_weights: Vec<f64>,
    pub effect_scale: f64,
    pub delay_knee_h: f64,
    pub delay_floor: f64,
    pub delay_floor_at_h: f64,
    pub purchase_time_rate: f64,
    pub ltv_log_mu: f64,
    pub ltv_log_sigma: f64,
    pub price_log_mu: f64,
    pub price_log_sigma: f64,
    pub likes_mean: f64,
    pub max_age_days: f64,
    /// Delay after the key action at which round-2 coupons are attached.
    pub round2_attach_delay_h: f64,
    /// Round-1 RCT attach delays are uniform on `[0, rct_max_delay_h)`.
    pub rct_max_delay_h: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_items: 50_000,
            rng_seed: 42,
            base_logit_r1: -0.5,
            base_logit_r2: -3.0,
            feature_weights: vec![-0.4, 0.3, -0.4, 2.0, 1.5, 0.2, 0.1],
            effect_scale: 0.05,
            delay_knee_h: 10.0,
            delay_floor: 0.3,
            delay_floor_at_h: 48.0,
            purchase_time_rate: 1.0,
            ltv_log_mu: 5000f64.ln(),
            ltv_log_sigma: 0.5,
            price_log_mu: 3000f64.ln(),
            price_log_sigma: 0.8,
            likes_mean: 8.0,
            max_age_days: 60.0,
            round2_attach_delay_h: 2.0,
            rct_max_delay_h: 48.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("effect_scale", self.effect_scale),
            ("purchase_time_rate", self.purchase_time_rate),
            ("ltv_log_sigma", self.ltv_log_sigma),
            ("price_log_sigma", self.price_log_sigma),
            ("likes_mean", self.likes_mean),
            ("max_age_days", self.max_age_days),
            ("rct_max_delay_h", self.rct_max_delay_h),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!(
                    "simulator.{name} must be positive, got {v}"
                )));
            }
        }
        let finite = [
            ("base_logit_r1", self.base_logit_r1),
            ("base_logit_r2", self.base_logit_r2),
            ("ltv_log_mu", self.ltv_log_mu),
            ("price_log_mu", self.price_log_mu),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(format!("simulator.{name} must be finite")));
            }
        }
        if self.feature_weights.len() != N_TRUTH_FEATURES
            || self.feature_weights.iter().any(|w| !w.is_finite())
        {
            return Err(invalid(format!(
                "simulator.feature_weights needs {N_TRUTH_FEATURES} finite values"
            )));
        }
        if !(self.delay_floor > 0.0 && self.delay_floor <= 1.0) {
            return Err(invalid("simulator.delay_floor must be in (0, 1]"));
        }
        if !(self.delay_knee_h >= 0.0 && self.delay_knee_h < self.delay_floor_at_h) {
            return Err(invalid(
                "simulator.delay_knee_h must be >= 0 and below delay_floor_at_h",
            ));
        }
        if !(self.round2_attach_delay_h.is_finite() && self.round2_attach_delay_h >= 0.0) {
            return Err(invalid("simulator.round2_attach_delay_h must be >= 0"));
        }
        // Round 2 sees the item three days older; a positive age weight must
        // not lift it above round 1.
        let age_gain = self.feature_weights[2].max(0.0) * ROUND_GAP_HOURS / 24.0 / 30.0;
        if self.base_logit_r2 + age_gain >= self.base_logit_r1 {
            return Err(invalid(
                "simulator.base_logit_r2 must be below base_logit_r1 (after the age shift)",
            ));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig =
            toml::from_str(text).map_err(|e| crate::Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("SimConfig serializes")
    }
}

/// Read-only handle on the structural model of a validated [`SimConfig`].
#[derive(Clone, Debug)]
pub struct GroundTruth {
    cfg: SimConfig,
}

impl GroundTruth {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg: cfg.clone() })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    fn z(&self, item: &ItemRecord, round: Round) -> [f64; N_TRUTH_FEATURES] {
        let age = match round {
            Round::First => item.age_days,
            Round::Second => item.age_days + ROUND_GAP_HOURS / 24.0,
        };
        let phase = TAU * item.season_phase;
        [
            (item.price_yen as f64).ln() - self.cfg.price_log_mu,
            (f64::from(item.condition) - 3.0) / 2.0,
            age / 30.0,
            f64::from(item.likes.min(10)) / 10.0,
            item.demand_index.max(0.0),
            phase.sin(),
            phase.cos(),
        ]
    }

    pub fn delay_multiplier(&self, delay_h: f64) -> f64 {
        let c = &self.cfg;
        if delay_h <= c.delay_knee_h {
            1.0
        } else if delay_h >= c.delay_floor_at_h {
            c.delay_floor
        } else {
            1.0 - (1.0 - c.delay_floor) * (delay_h - c.delay_knee_h)
                / (c.delay_floor_at_h - c.delay_knee_h)
        }
    }

    pub fn responsiveness(item: &ItemRecord) -> f64 {
        0.5 + f64::from(item.likes.min(10)) / 10.0
    }

    pub fn base_logit(&self, item: &ItemRecord, round: Round) -> f64 {
        let b = match round {
            Round::First => self.cfg.base_logit_r1,
            Round::Second => self.cfg.base_logit_r2,
        };
        let z = self.z(item, round);
        b + z
            .iter()
            .zip(&self.cfg.feature_weights)
            .map(|(a, w)| a * w)
            .sum::<f64>()
    }

    /// Probability that the buyer decides to purchase, before validity truncation.
    pub fn true_propensity(
        &self,
        item: &ItemRecord,
        coupon: &CouponConfig,
        round: Round,
        attach_delay_h: f64,
    ) -> f64 {
        let mut logit = self.base_logit(item, round);
        if !coupon.is_none() {
            logit += self.cfg.effect_scale
                * f64::from(coupon.discount_pct)
                * Self::responsiveness(item)
                * self.delay_multiplier(attach_delay_h);
        }
        sigmoid(logit)
    }

    /// Rate of the exponential purchase-time distribution (per hour).
    pub fn purchase_rate(&self, item: &ItemRecord) -> f64 {
        self.cfg.purchase_time_rate / (1.0 + (item.price_yen as f64 / 1000.0 + 1.0).ln())
    }

    /// Probability that a sale is actually recorded: decision propensity times
    /// the chance the purchase lands inside a coupon's validity window.
    pub fn sale_probability(
        &self,
        item: &ItemRecord,
        coupon: &CouponConfig,
        round: Round,
        attach_delay_h: f64,
    ) -> f64 {
        let p = self.true_propensity(item, coupon, round, attach_delay_h);
        if coupon.is_none() {
            p
        } else {
            p * -(-self.purchase_rate(item) * coupon.validity_hours).exp_m1()
        }
    }

    /// One item-round outcome. Always consumes exactly two uniforms from `rng`
    /// so strategies sharing a stream see common random numbers.
    fn draw_outcome(
        &self,
        item: &ItemRecord,
        coupon: CouponConfig,
        round: Round,
        attach_delay_h: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<OutcomeRecord> {
        let u_sale: f64 = rng.random();
        let u_time: f64 = rng.random();
        let p = self.true_propensity(item, &coupon, round, attach_delay_h);
        let t = -(-u_time).ln_1p() / self.purchase_rate(item);
        let in_window = coupon.is_none() || t <= coupon.validity_hours;
        if u_sale < p && in_window {
            OutcomeRecord::sold(item, round, coupon, attach_delay_h, t)
        } else {
            Ok(OutcomeRecord::unsold(
                &item.item_id,
                round,
                coupon,
                attach_delay_h,
            ))
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn round_yen(x: f64) -> Yen {
    (x.round() as Yen).max(1)
}

/// Draws `n_items` listings. Item `i` uses its own substream, so its own
/// attributes do not depend on the catalog size. Sellers are drawn from a
/// pool of `n_items / 3`, so seller assignment does.
pub fn generate_catalog(cfg: &SimConfig) -> Result<Vec<ItemRecord>> {
    cfg.validate()?;
    let price_d = LogNormal::new(cfg.price_log_mu, cfg.price_log_sigma)
        .map_err(|e| invalid(format!("price distribution: {e}")))?;
    let ltv_d = LogNormal::new(cfg.ltv_log_mu, cfg.ltv_log_sigma)
        .map_err(|e| invalid(format!("ltv distribution: {e}")))?;
    let likes_d =
        Poisson::new(cfg.likes_mean).map_err(|e| invalid(format!("likes distribution: {e}")))?;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n_sellers = (cfg.n_items / 3).max(1) as u64;

    let mut items = Vec::with_capacity(cfg.n_items);
    for i in 0..cfg.n_items as u64 {
        let mut rng = substream(cfg.rng_seed, &[purpose::CATALOG, i]);
        let price = round_yen(price_d.sample(&mut rng));
        let condition = rng.random_range(1..=5u8);
        let age_days = rng.random_range(0.0..cfg.max_age_days);
        let likes = likes_d.sample(&mut rng) as u32;
        let demand_index = std_normal.sample(&mut rng);
        let season_phase = rng.random_range(0.0..1.0);
        let key_action_ts = rng.random_range(0.0..24.0 * 365.0);
        let seller = rng.random_range(0..n_sellers);
        let mut srng = substream(cfg.rng_seed, &[purpose::SELLER, seller]);
        let ltv = round_yen(ltv_d.sample(&mut srng));
        items.push(ItemRecord {
            item_id: format!("I{i:08}"),
            seller_id: format!("S{seller:07}"),
            price_yen: price,
            condition,
            age_days,
            likes,
            demand_index,
            season_phase,
            seller_ltv_yen: ltv,
            key_action_ts,
            status: ItemStatus::Unsold,
        });
    }
    Ok(items)
}

/// Per-round arm probabilities for an RCT, aligned with the coupon sets.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentProbs {
    pub round1: Vec<f64>,
    pub round2: Vec<f64>,
}

impl AssignmentProbs {
    /// `holdout` on the no-coupon arm, the rest split evenly over real coupons.
    pub fn with_holdout(set1: &CouponSet, set2: &CouponSet, holdout: f64) -> Self {
        let split = |set: &CouponSet| {
            let rest = (1.0 - holdout) / (set.len() - 1) as f64;
            let mut v = vec![rest; set.len()];
            v[0] = holdout;
            v
        };
        Self {
            round1: split(set1),
            round2: split(set2),
        }
    }

    fn check(probs: &[f64], set: &CouponSet) -> Result<()> {
        if probs.len() != set.len() {
            return Err(invalid(format!(
                "assignment has {} probabilities for {} arms",
                probs.len(),
                set.len()
            )));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(invalid("assignment probabilities must be finite and >= 0"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!(
                "assignment probabilities sum to {total}, not 1"
            )));
        }
        Ok(())
    }
}

pub(crate) fn draw_arm(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding in the running sum: fall back to the last arm with mass.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Output of [`run_rct`], every list sorted by item id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RctLogs {
    pub round1: Vec<OutcomeRecord>,
    pub survivors: Vec<String>,
    pub round2: Vec<OutcomeRecord>,
}

/// Two-round randomized trial: independent arm draws per round with a holdout.
pub fn run_rct(
    gt: &GroundTruth,
    items: &[ItemRecord],
    round1_set: &CouponSet,
    round2_set: &CouponSet,
    assignment: &AssignmentProbs,
    seed: u64,
) -> Result<RctLogs> {
    AssignmentProbs::check(&assignment.round1, round1_set)?;
    AssignmentProbs::check(&assignment.round2, round2_set)?;
    let mut order: Vec<&ItemRecord> = items.iter().collect();
    order.sort_by(|a, b| a.item_id.cmp(&b.item_id));

    let mut logs = RctLogs::default();
    for item in order {
        let key = key_str(&item.item_id);
        let mut r1 = substream(seed, &[purpose::RCT, key, 1]);
        let arm = draw_arm(&assignment.round1, r1.random());
        let delay = r1.random_range(0.0..gt.cfg.rct_max_delay_h);
        let rec1 = gt.draw_outcome(item, round1_set.arms()[arm], Round::First, delay, &mut r1)?;
        let sold = rec1.sold;
        logs.round1.push(rec1);
        if sold {
            continue;
        }
        logs.survivors.push(item.item_id.clone());
        let mut r2 = substream(seed, &[purpose::RCT, key, 2]);
        let arm = draw_arm(&assignment.round2, r2.random());
        let rec2 = gt.draw_outcome(
            item,
            round2_set.arms()[arm],
            Round::Second,
            gt.cfg.round2_attach_delay_h,
            &mut r2,
        )?;
        logs.round2.push(rec2);
    }
    Ok(logs)
}

/// What a policy does with one item across both rounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyAction {
    pub round1: CouponConfig,
    pub attach_delay_h: f64,
    pub round2: CouponConfig,
}

impl PolicyAction {
    pub fn no_coupon(attach_delay_h: f64) -> Self {
        Self {
            round1: CouponConfig::NONE,
            attach_delay_h,
            round2: CouponConfig::NONE,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RolloutTotals {
    pub n_items: usize,
    pub sales: usize,
    pub coupon_cost_yen: Yen,
    pub gmv_yen: Yen,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rollout {
    pub records: Vec<OutcomeRecord>,
    pub totals: RolloutTotals,
}

/// Simulates both rounds under `policy`. The sale draws for an item depend
/// only on `(seed, item, round)`, so different policies run with the same
/// seed share their random numbers.
pub fn rollout_policy<F>(
    gt: &GroundTruth,
    items: &[ItemRecord],
    policy: F,
    seed: u64,
) -> Result<Rollout>
where
    F: Fn(&ItemRecord) -> PolicyAction,
{
    let mut order: Vec<&ItemRecord> = items.iter().collect();
    order.sort_by(|a, b| a.item_id.cmp(&b.item_id));

    let mut out = Rollout::default();
    for item in order {
        let action = policy(item);
        let key = key_str(&item.item_id);
        out.totals.n_items += 1;
        let mut r1 = substream(seed, &[purpose::ROLLOUT, key, 1]);
        let rec1 = gt.draw_outcome(
            item,
            action.round1,
            Round::First,
            action.attach_delay_h,
            &mut r1,
        )?;
        let sold = rec1.sold;
        add_sale(&mut out.totals, &rec1);
        out.records.push(rec1);
        if sold {
            continue;
        }
        let mut r2 = substream(seed, &[purpose::ROLLOUT, key, 2]);
        let rec2 = gt.draw_outcome(
            item,
            action.round2,
            Round::Second,
            gt.cfg.round2_attach_delay_h,
            &mut r2,
        )?;
        add_sale(&mut out.totals, &rec2);
        out.records.push(rec2);
    }
    Ok(out)
}

fn add_sale(t: &mut RolloutTotals, rec: &OutcomeRecord) {
    if rec.sold {
        t.sales += 1;
        t.coupon_cost_yen += rec.coupon_cost_yen.unwrap_or(0);
        t.gmv_yen += rec.sale_price_yen.unwrap_or(0);
    }
}

/// Expected recorded-sale probability and expected coupon spend of an action,
/// computed from the structural model.
pub fn expected_outcome(
    gt: &GroundTruth,
    item: &ItemRecord,
    action: &PolicyAction,
) -> Result<(f64, f64)> {
    let p1 = gt.sale_probability(item, &action.round1, Round::First, action.attach_delay_h);
    let p2 = gt.sale_probability(
        item,
        &action.round2,
        Round::Second,
        gt.cfg.round2_attach_delay_h,
    );
    let c1 = coupon_cost(&action.round1, item.price_yen)? as f64;
    let c2 = coupon_cost(&action.round2, item.price_yen)? as f64;
    Ok((p1 + (1.0 - p1) * p2, p1 * c1 + (1.0 - p1) * p2 * c2))
}
