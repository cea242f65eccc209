//! Lift, delay analyses, cumulative uplift with bootstrap bands, and the
//! strategy comparison.

use std::fmt::Write as _;

use rand::Rng;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::decision::{allocate, allocate_independent, PolicyConstraint};
use crate::domain::{CouponSet, ItemRecord, OutcomeRecord};
use crate::error::{invalid, Error, Result};
use crate::io;
use crate::numfmt::fmt_f64;
use crate::rng::{key_str, purpose, substream};
use crate::simulator::{
    draw_arm, generate_catalog, rollout_policy, GroundTruth, PolicyAction, SimConfig,
};
use crate::uplift::{predict_item, PredictorPair};

fn rate(sold: usize, n: usize) -> f64 {
    sold as f64 / n as f64
}

/// Difference of sold rates with its two-sample standard error.
pub fn lift_from_counts(
    sold_t: usize,
    n_t: usize,
    sold_c: usize,
    n_c: usize,
) -> Result<(f64, f64)> {
    if n_t == 0 || n_c == 0 {
        return Err(invalid("both groups must be non-empty"));
    }
    let (pt, pc) = (rate(sold_t, n_t), rate(sold_c, n_c));
    let se = (pt * (1.0 - pt) / n_t as f64 + pc * (1.0 - pc) / n_c as f64).sqrt();
    Ok((pt - pc, se))
}

pub fn str_lift(treated: &[OutcomeRecord], control: &[OutcomeRecord]) -> Result<(f64, f64)> {
    let sold = |g: &[OutcomeRecord]| g.iter().filter(|r| r.sold).count();
    lift_from_counts(sold(treated), treated.len(), sold(control), control.len())
}

pub const DEFAULT_BUCKET_WIDTH_H: f64 = 2.0;
/// Post-attach analyses cover purchases within this many hours.
pub const DEFAULT_POST_ATTACH_HORIZON_H: f64 = 72.0;

#[derive(Clone, Debug, PartialEq)]
pub struct DelayRow {
    pub bucket_start_h: f64,
    pub metric: &'static str,
    pub value: Option<f64>,
    pub n: usize,
}

pub const LIFT_BY_ATTACH_DELAY: &str = "lift_str_by_attach_delay";
pub const STR_TREATED_AFTER_ATTACH: &str = "str_treated_by_hours_after_attach";
pub const STR_CONTROL_AFTER_ATTACH: &str = "str_control_by_hours_after_attach";
pub const LIFT_AFTER_ATTACH: &str = "lift_str_by_hours_after_attach";
pub const AOV_AFTER_ATTACH: &str = "aov_by_hours_after_attach";

fn bucket_of(x: f64, width: f64) -> usize {
    (x / width).floor().max(0.0) as usize
}

/// Bucketed delay tables for one round's log (treated = any real coupon,
/// control = the no-coupon arm). Empty buckets are kept with a null value.
///
/// * lift by attach delay: sold-rate difference per attach-delay bucket;
/// * sold rate by hours after attach: share of the group that bought in that bucket;
/// * AOV by hours after attach: mean sale price of coupon sales in that bucket.
pub fn delay_analysis(
    log: &[OutcomeRecord],
    bucket_width_h: f64,
    horizon_h: f64,
) -> Result<Vec<DelayRow>> {
    if !(bucket_width_h > 0.0 && bucket_width_h.is_finite()) {
        return Err(invalid("bucket width must be positive"));
    }
    if !(horizon_h > 0.0 && horizon_h.is_finite()) {
        return Err(invalid("post-attach horizon must be positive"));
    }
    let n_control = log.iter().filter(|r| r.coupon.is_none()).count();
    if n_control == 0 {
        return Err(Error::MissingHoldout(
            "delay analysis needs no-coupon records as the control group".into(),
        ));
    }
    let n_treated = log.len() - n_control;
    let mut rows = Vec::new();

    let max_delay = log.iter().map(|r| r.attach_delay_h).fold(0.0, f64::max);
    let n_delay = bucket_of(max_delay, bucket_width_h) + 1;
    // (treated n, treated sold, control n, control sold)
    let mut by_delay = vec![(0usize, 0usize, 0usize, 0usize); n_delay];
    for r in log {
        let b = &mut by_delay[bucket_of(r.attach_delay_h, bucket_width_h)];
        if r.coupon.is_none() {
            b.2 += 1;
            b.3 += usize::from(r.sold);
        } else {
            b.0 += 1;
            b.1 += usize::from(r.sold);
        }
    }
    for (i, (nt, st, nc, sc)) in by_delay.iter().enumerate() {
        rows.push(DelayRow {
            bucket_start_h: i as f64 * bucket_width_h,
            metric: LIFT_BY_ATTACH_DELAY,
            value: lift_from_counts(*st, *nt, *sc, *nc).ok().map(|l| l.0),
            n: nt + nc,
        });
    }

    let n_post = (horizon_h / bucket_width_h).ceil() as usize;
    // (treated sales, control sales, treated price sum)
    let mut post = vec![(0usize, 0usize, 0.0f64); n_post];
    for r in log.iter().filter(|r| r.sold) {
        let t = r.purchase_delay_h.unwrap_or(0.0);
        if t >= horizon_h {
            continue;
        }
        let b = &mut post[bucket_of(t, bucket_width_h).min(n_post - 1)];
        if r.coupon.is_none() {
            b.1 += 1;
        } else {
            b.0 += 1;
            b.2 += r.sale_price_yen.unwrap_or(0) as f64;
        }
    }
    for (i, (st, sc, price_sum)) in post.iter().enumerate() {
        let start = i as f64 * bucket_width_h;
        let str_t = (n_treated > 0).then(|| rate(*st, n_treated));
        let str_c = rate(*sc, n_control);
        rows.push(DelayRow {
            bucket_start_h: start,
            metric: STR_TREATED_AFTER_ATTACH,
            value: str_t,
            n: *st,
        });
        rows.push(DelayRow {
            bucket_start_h: start,
            metric: STR_CONTROL_AFTER_ATTACH,
            value: Some(str_c),
            n: *sc,
        });
        rows.push(DelayRow {
            bucket_start_h: start,
            metric: LIFT_AFTER_ATTACH,
            value: str_t.map(|t| t - str_c),
            n: st + sc,
        });
        rows.push(DelayRow {
            bucket_start_h: start,
            metric: AOV_AFTER_ATTACH,
            value: (*st > 0).then(|| price_sum / *st as f64),
            n: *st,
        });
    }
    Ok(rows)
}

/// Values of one metric in bucket order.
pub fn metric_series(rows: &[DelayRow], metric: &str) -> Vec<Option<f64>> {
    rows.iter()
        .filter(|r| r.metric == metric)
        .map(|r| r.value)
        .collect()
}

/// Pooled lift for attach delays `<= early_h` and `>= late_h`.
pub fn early_late_lift(
    log: &[OutcomeRecord],
    early_h: f64,
    late_h: f64,
) -> Result<((f64, f64), (f64, f64))> {
    let split = |keep: &dyn Fn(f64) -> bool| {
        let (t, c): (Vec<OutcomeRecord>, Vec<OutcomeRecord>) = log
            .iter()
            .filter(|r| keep(r.attach_delay_h))
            .cloned()
            .partition(|r| !r.coupon.is_none());
        str_lift(&t, &c)
    };
    Ok((split(&|d| d <= early_h)?, split(&|d| d >= late_h)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpliftCurve {
    /// (population fraction, uplift) with null where a slice lacks a group.
    pub points: Vec<(f64, Option<f64>)>,
    pub bands: Option<Vec<Option<(f64, f64)>>>,
    /// Uplift expected from random targeting: the overall effect.
    pub random_reference: f64,
}

impl UpliftCurve {
    /// Least-squares slope of uplift against population fraction.
    pub fn decile_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .filter_map(|(q, u)| u.map(|u| (*q, u)))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        Some(sxy / sxx)
    }
}

/// Cumulative uplift over the top-q fraction of items ranked by descending score.
pub fn cumulative_uplift(
    scores: &[f64],
    treated: &[bool],
    sold: &[bool],
    deciles: usize,
) -> Result<UpliftCurve> {
    let n = scores.len();
    if treated.len() != n || sold.len() != n {
        return Err(invalid("scores, treated and sold must be aligned"));
    }
    if deciles == 0 {
        return Err(invalid("deciles must be positive"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(invalid("scores must not be NaN"));
    }
    if !treated.iter().any(|t| *t) {
        return Err(invalid("no treated items"));
    }
    if treated.iter().all(|t| *t) {
        return Err(Error::MissingHoldout("no control items".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut nt, mut st, mut nc, mut sc) = (0, 0, 0, 0);
    let mut at = 0;
    let mut points = Vec::with_capacity(deciles);
    for q in 1..=deciles {
        let end = q * n / deciles;
        while at < end {
            let i = order[at];
            if treated[i] {
                nt += 1;
                st += usize::from(sold[i]);
            } else {
                nc += 1;
                sc += usize::from(sold[i]);
            }
            at += 1;
        }
        let u = lift_from_counts(st, nt, sc, nc).ok().map(|l| l.0);
        points.push((q as f64 / deciles as f64, u));
    }
    let random_reference = lift_from_counts(st, nt, sc, nc)?.0;
    Ok(UpliftCurve {
        points,
        bands: None,
        random_reference,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bootstrap {
    pub bands: Vec<Option<(f64, f64)>>,
    pub replicates: Vec<UpliftCurve>,
}

/// Resamples `n` units with replacement `b` times and takes the 5th/95th
/// percentile of each curve point. Lower index `floor(0.05 (m-1))`, upper
/// `ceil(0.95 (m-1))` over the `m` non-null replicate values.
pub fn bootstrap_band<F>(curve_fn: F, n: usize, b: usize, seed: u64) -> Result<Bootstrap>
where
    F: Fn(&[usize]) -> Result<UpliftCurve>,
{
    if b < 2 {
        return Err(invalid("bootstrap needs at least two replicates"));
    }
    if n == 0 {
        return Err(invalid("bootstrap needs at least one unit"));
    }
    let mut replicates = Vec::with_capacity(b);
    let mut idx = vec![0usize; n];
    for r in 0..b {
        let mut rng = substream(seed, &[purpose::BOOTSTRAP, r as u64]);
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        replicates.push(curve_fn(&idx)?);
    }
    let n_points = replicates[0].points.len();
    let bands = (0..n_points)
        .map(|p| {
            let mut vals: Vec<f64> = replicates.iter().filter_map(|c| c.points[p].1).collect();
            if vals.is_empty() {
                return None;
            }
            vals.sort_by(f64::total_cmp);
            let m = (vals.len() - 1) as f64;
            let lo = vals[(0.05 * m).floor() as usize];
            let hi = vals[(0.95 * m).ceil() as usize];
            Some((lo, hi))
        })
        .collect();
    Ok(Bootstrap { bands, replicates })
}

/// Convenience: bootstrap an uplift curve over aligned item arrays.
pub fn bootstrap_uplift(
    scores: &[f64],
    treated: &[bool],
    sold: &[bool],
    deciles: usize,
    b: usize,
    seed: u64,
) -> Result<(UpliftCurve, Bootstrap)> {
    let mut curve = cumulative_uplift(scores, treated, sold, deciles)?;
    let boot = bootstrap_band(
        |idx| {
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let t: Vec<bool> = idx.iter().map(|&i| treated[i]).collect();
            let y: Vec<bool> = idx.iter().map(|&i| sold[i]).collect();
            cumulative_uplift(&s, &t, &y, deciles)
        },
        scores.len(),
        b,
        seed,
    )?;
    curve.bands = Some(boot.bands.clone());
    Ok((curve, boot))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Strategy {
    Holdout,
    Random,
    Independent,
    Sequential,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Holdout,
        Strategy::Random,
        Strategy::Independent,
        Strategy::Sequential,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Holdout => "holdout",
            Strategy::Random => "random",
            Strategy::Independent => "independent",
            Strategy::Sequential => "sequential",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub sales: usize,
    pub sales_rate: f64,
    pub lift_str: f64,
    pub total_coupon_cost: i64,
    pub gmv: i64,
    /// Incremental sales times mean LTV per yen of coupon spend; `inf` at zero spend.
    pub roi_realized: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub n_items: usize,
    pub catalog_sha256: String,
    pub mean_ltv: f64,
    pub strategies: Vec<StrategyResult>,
}

impl SeedResult {
    pub fn get(&self, s: Strategy) -> &StrategyResult {
        self.strategies
            .iter()
            .find(|r| r.strategy == s)
            .expect("every strategy is evaluated")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedTest {
    pub mean_difference: f64,
    pub t_statistic: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub seeds: Vec<u64>,
    pub constraint: PolicyConstraint,
    pub attach_delay_h: f64,
    pub per_seed: Vec<SeedResult>,
    /// Sequential minus independent realized ROI, one-sided.
    pub roi_test: Option<PairedTest>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareSettings {
    pub n_items: usize,
    pub seeds: Vec<u64>,
    pub constraint: PolicyConstraint,
    pub attach_delay_h: f64,
    /// Round-1 and round-2 arm probabilities for the random strategy.
    pub random_round1: Vec<f64>,
    pub random_round2: Vec<f64>,
}

impl CompareSettings {
    pub fn uniform(
        n_items: usize,
        seeds: Vec<u64>,
        constraint: PolicyConstraint,
        attach_delay_h: f64,
        pair: &PredictorPair,
    ) -> Self {
        let uni = |set: &CouponSet| vec![1.0 / set.len() as f64; set.len()];
        Self {
            n_items,
            seeds,
            constraint,
            attach_delay_h,
            random_round1: uni(&pair.round1_set),
            random_round2: uni(&pair.round2_set),
        }
    }
}

pub fn catalog_hash(items: &[ItemRecord]) -> Result<String> {
    let bytes = io::catalog_to_bytes(items)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn actions_for(
    strategy: Strategy,
    items: &[ItemRecord],
    pair: &PredictorPair,
    settings: &CompareSettings,
    seed: u64,
) -> Result<Vec<PolicyAction>> {
    let delay = settings.attach_delay_h;
    let set1 = &pair.round1_set;
    let set2 = &pair.round2_set;
    items
        .iter()
        .map(|item| {
            Ok(match strategy {
                Strategy::Holdout => PolicyAction::no_coupon(delay),
                Strategy::Random => {
                    let mut rng =
                        substream(seed, &[purpose::RANDOM_POLICY, key_str(&item.item_id)]);
                    let j = draw_arm(&settings.random_round1, rng.random());
                    let k = draw_arm(&settings.random_round2, rng.random());
                    PolicyAction {
                        round1: set1.arms()[j],
                        attach_delay_h: delay,
                        round2: set2.arms()[k],
                    }
                }
                Strategy::Independent | Strategy::Sequential => {
                    let preds = predict_item(pair, item, delay)?;
                    let plan = if strategy == Strategy::Independent {
                        allocate_independent(&preds, item, set1, set2, &settings.constraint, delay)?
                    } else {
                        allocate(&preds, item, set1, set2, &settings.constraint, delay)?
                    };
                    PolicyAction {
                        round1: plan.round1_coupon,
                        attach_delay_h: delay,
                        round2: plan.round2_coupon,
                    }
                }
            })
        })
        .collect()
}

fn check_probs(p: &[f64], set: &CouponSet) -> Result<()> {
    let total: f64 = p.iter().sum();
    if p.len() != set.len() || p.iter().any(|v| v.is_nan() || *v < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(invalid(
            "random strategy probabilities must match the arms and sum to 1",
        ));
    }
    Ok(())
}

pub fn paired_one_sided(diffs: &[f64]) -> Option<PairedTest> {
    let n = diffs.len();
    if n < 2 || diffs.iter().any(|d| !d.is_finite()) {
        return None;
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let (t, p) = if se == 0.0 {
        let p = if mean > 0.0 { 0.0 } else { 1.0 };
        (if mean > 0.0 { f64::INFINITY } else { 0.0 }, p)
    } else {
        let t = mean / se;
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid degrees of freedom");
        (t, 1.0 - dist.cdf(t))
    };
    Some(PairedTest {
        mean_difference: mean,
        t_statistic: t,
        p_value: p,
    })
}

/// Rolls out every strategy on the same catalog and random numbers per seed.
pub fn compare_strategies(
    sim: &SimConfig,
    pair: &PredictorPair,
    settings: &CompareSettings,
) -> Result<ComparisonReport> {
    check_probs(&settings.random_round1, &pair.round1_set)?;
    check_probs(&settings.random_round2, &pair.round2_set)?;
    let mut per_seed = Vec::with_capacity(settings.seeds.len());
    for &seed in &settings.seeds {
        let cfg = SimConfig {
            n_items: settings.n_items,
            rng_seed: seed,
            ..sim.clone()
        };
        let gt = GroundTruth::new(&cfg)?;
        let reference = catalog_hash(&generate_catalog(&cfg)?)?;
        let mut results: Vec<(Strategy, crate::simulator::RolloutTotals)> = Vec::new();
        let mut mean_ltv = 0.0;
        for strategy in Strategy::ALL {
            // Each strategy draws its own copy of the catalog; the hashes must agree.
            let items = generate_catalog(&cfg)?;
            if catalog_hash(&items)? != reference {
                return Err(Error::Contract(format!(
                    "catalog for seed {seed} is not reproducible"
                )));
            }
            mean_ltv = if items.is_empty() {
                0.0
            } else {
                items.iter().map(|i| i.seller_ltv_yen as f64).sum::<f64>() / items.len() as f64
            };
            let actions = actions_for(strategy, &items, pair, settings, seed)?;
            let by_id: std::collections::HashMap<&str, PolicyAction> = items
                .iter()
                .zip(&actions)
                .map(|(it, a)| (it.item_id.as_str(), *a))
                .collect();
            let out = rollout_policy(&gt, &items, |it| by_id[it.item_id.as_str()], seed)?;
            results.push((strategy, out.totals));
        }
        let n = settings.n_items.max(1);
        let holdout_sales = results[0].1.sales;
        let strategies = results
            .iter()
            .map(|(s, t)| {
                let incremental = t.sales as f64 - holdout_sales as f64;
                StrategyResult {
                    strategy: *s,
                    sales: t.sales,
                    sales_rate: rate(t.sales, n),
                    lift_str: incremental / n as f64,
                    total_coupon_cost: t.coupon_cost_yen,
                    gmv: t.gmv_yen,
                    roi_realized: if t.coupon_cost_yen == 0 {
                        f64::INFINITY
                    } else {
                        incremental * mean_ltv / t.coupon_cost_yen as f64
                    },
                }
            })
            .collect();
        per_seed.push(SeedResult {
            seed,
            n_items: settings.n_items,
            catalog_sha256: reference,
            mean_ltv,
            strategies,
        });
    }
    let diffs: Vec<f64> = per_seed
        .iter()
        .map(|s| {
            s.get(Strategy::Sequential).roi_realized - s.get(Strategy::Independent).roi_realized
        })
        .collect();
    Ok(ComparisonReport {
        seeds: settings.seeds.clone(),
        constraint: settings.constraint,
        attach_delay_h: settings.attach_delay_h,
        per_seed,
        roi_test: paired_one_sided(&diffs),
    })
}

impl ComparisonReport {
    pub fn mean_of(&self, s: Strategy, f: impl Fn(&StrategyResult) -> f64) -> f64 {
        if self.per_seed.is_empty() {
            return f64::NAN;
        }
        self.per_seed.iter().map(|r| f(r.get(s))).sum::<f64>() / self.per_seed.len() as f64
    }

    /// `key = value` lines in a fixed order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "seeds = [{}]", seeds.join(", "));
        let _ = writeln!(
            out,
            "lift_threshold = {}",
            fmt_f64(self.constraint.lift_threshold)
        );
        let _ = writeln!(
            out,
            "ltv_override = {}",
            self.constraint
                .ltv_override
                .map_or("none".to_string(), |v| v.to_string())
        );
        let _ = writeln!(out, "attach_delay_h = {}", fmt_f64(self.attach_delay_h));
        for s in Strategy::ALL {
            let l = s.label();
            let _ = writeln!(
                out,
                "mean.{l}.sales_rate = {}",
                fmt_f64(self.mean_of(s, |r| r.sales_rate))
            );
            let _ = writeln!(
                out,
                "mean.{l}.lift_str = {}",
                fmt_f64(self.mean_of(s, |r| r.lift_str))
            );
            let _ = writeln!(
                out,
                "mean.{l}.total_coupon_cost = {}",
                fmt_f64(self.mean_of(s, |r| r.total_coupon_cost as f64))
            );
            let _ = writeln!(
                out,
                "mean.{l}.gmv = {}",
                fmt_f64(self.mean_of(s, |r| r.gmv as f64))
            );
            let _ = writeln!(
                out,
                "mean.{l}.roi_realized = {}",
                fmt_f64(self.mean_of(s, |r| r.roi_realized))
            );
        }
        match &self.roi_test {
            Some(t) => {
                let _ = writeln!(
                    out,
                    "test.sequential_minus_independent.mean = {}",
                    fmt_f64(t.mean_difference)
                );
                let _ = writeln!(
                    out,
                    "test.sequential_minus_independent.t = {}",
                    fmt_f64(t.t_statistic)
                );
                let _ = writeln!(
                    out,
                    "test.sequential_minus_independent.p_one_sided = {}",
                    fmt_f64(t.p_value)
                );
            }
            None => {
                let _ = writeln!(out, "test.sequential_minus_independent = unavailable");
            }
        }
        for r in &self.per_seed {
            let p = format!("seed.{}", r.seed);
            let _ = writeln!(out, "{p}.n_items = {}", r.n_items);
            let _ = writeln!(out, "{p}.catalog_sha256 = {}", r.catalog_sha256);
            let _ = writeln!(out, "{p}.mean_ltv = {}", fmt_f64(r.mean_ltv));
            for s in &r.strategies {
                let q = format!("{p}.{}", s.strategy.label());
                let _ = writeln!(out, "{q}.sales = {}", s.sales);
                let _ = writeln!(out, "{q}.sales_rate = {}", fmt_f64(s.sales_rate));
                let _ = writeln!(out, "{q}.lift_str = {}", fmt_f64(s.lift_str));
                let _ = writeln!(out, "{q}.total_coupon_cost = {}", s.total_coupon_cost);
                let _ = writeln!(out, "{q}.gmv = {}", s.gmv);
                let _ = writeln!(out, "{q}.roi_realized = {}", fmt_f64(s.roi_realized));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{fixtures::item, CouponConfig, Round};

    fn recs(n: usize, sold: usize, coupon: CouponConfig) -> Vec<OutcomeRecord> {
        let it = item();
        (0..n)
            .map(|i| {
                if i < sold {
                    OutcomeRecord::sold(&it, Round::First, coupon, 0.0, 0.5).unwrap()
                } else {
                    OutcomeRecord::unsold(&it.item_id, Round::First, coupon, 0.0)
                }
            })
            .collect()
    }

    fn c10() -> CouponConfig {
        CouponConfig::new(10, 10.0, 1000).unwrap()
    }

    #[test]
    fn lift_examples() {
        let (l, se) = str_lift(&recs(100, 60, c10()), &recs(100, 40, CouponConfig::NONE)).unwrap();
        assert!((l - 0.2).abs() < 1e-12);
        assert!((se - (0.24f64 / 100.0 * 2.0).sqrt()).abs() < 1e-12);
        let g = recs(50, 20, c10());
        assert_eq!(str_lift(&g, &g).unwrap().0, 0.0);
        assert!(str_lift(&[], &g).is_err());
    }

    #[test]
    fn delay_analysis_all_at_zero() {
        let mut log = recs(10, 6, c10());
        log.extend(recs(10, 3, CouponConfig::NONE));
        let rows = delay_analysis(&log, 2.0, 72.0).unwrap();
        let lift = metric_series(&rows, LIFT_BY_ATTACH_DELAY);
        assert_eq!(lift.len(), 1);
        assert!((lift[0].unwrap() - 0.3).abs() < 1e-12);
        let aov = metric_series(&rows, AOV_AFTER_ATTACH);
        assert_eq!(aov.len(), 36);
        assert_eq!(aov[0], Some(3000.0));
        assert!(aov[1..].iter().all(Option::is_none));
        assert!(matches!(
            delay_analysis(&recs(5, 1, c10()), 2.0, 72.0),
            Err(Error::MissingHoldout(_))
        ));
    }

    #[test]
    fn uplift_curve_basics() {
        let n = 100;
        let scores: Vec<f64> = (0..n).map(f64::from).collect();
        let treated: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let zero = vec![false; n as usize];
        let c = cumulative_uplift(&scores, &treated, &zero, 10).unwrap();
        assert!(c.points.iter().all(|p| p.1 == Some(0.0)));
        assert_eq!(c.points.last().unwrap().0, 1.0);
        let sold: Vec<bool> = (0..n).map(|i| i % 2 == 0 && i > 50).collect();
        let c = cumulative_uplift(&scores, &treated, &sold, 10).unwrap();
        assert_eq!(c.points.last().unwrap().1, Some(c.random_reference));
        assert!(c.decile_slope().unwrap() < 0.0);
        // Top 1% holds only one item: one group is missing there.
        let c = cumulative_uplift(&scores, &treated, &sold, 100).unwrap();
        assert_eq!(c.points[0].1, None);
    }

    #[test]
    fn bootstrap_two_replicates_is_min_max() {
        let scores: Vec<f64> = (0..40).map(f64::from).collect();
        let treated: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let sold: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let (_, boot) = bootstrap_uplift(&scores, &treated, &sold, 4, 2, 5).unwrap();
        for (p, band) in boot.bands.iter().enumerate() {
            let vals: Vec<f64> = boot
                .replicates
                .iter()
                .filter_map(|c| c.points[p].1)
                .collect();
            if let Some((lo, hi)) = band {
                let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!((*lo, *hi), (min, max));
            }
        }
        let again = bootstrap_uplift(&scores, &treated, &sold, 4, 2, 5)
            .unwrap()
            .1;
        assert_eq!(again, boot);
    }

    #[test]
    fn paired_test_directions() {
        let t = paired_one_sided(&[1.0, 2.0, 1.5, 1.2]).unwrap();
        assert!(t.p_value < 0.01);
        let t = paired_one_sided(&[-1.0, -2.0, -1.5]).unwrap();
        assert!(t.p_value > 0.9);
        assert!(paired_one_sided(&[1.0]).is_none());
    }
}
