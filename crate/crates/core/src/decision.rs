//! Combined propensity, expected cost, ROI and the per-item allocation rule.

use std::cmp::Ordering;

use crate::domain::{
    coupon_cost, CouponConfig, CouponSet, ItemRecord, OutcomeRecord, Yen, ROUND_GAP_HOURS,
};
use crate::error::{invalid, Error, Result};
use crate::uplift::{predict_item, ItemPredictions, PredictorPair};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyConstraint {
    /// Minimum lift over the no-coupon baseline for a plan to be feasible.
    pub lift_threshold: f64,
    pub ltv_override: Option<Yen>,
}

impl PolicyConstraint {
    pub fn new(lift_threshold: f64, ltv_override: Option<Yen>) -> Result<Self> {
        if !(0.0..1.0).contains(&lift_threshold) {
            return Err(invalid(format!(
                "lift_threshold {lift_threshold} must be in [0, 1)"
            )));
        }
        if ltv_override.is_some_and(|v| v <= 0) {
            return Err(invalid("ltv_override must be positive"));
        }
        Ok(Self {
            lift_threshold,
            ltv_override,
        })
    }

    fn ltv(&self, item: &ItemRecord) -> Yen {
        self.ltv_override.unwrap_or(item.seller_ltv_yen)
    }
}

/// ROI with an explicit sentinel for positive lift at zero cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Roi {
    Finite(f64),
    Infinite,
}

impl Roi {
    pub fn value(self) -> f64 {
        match self {
            Roi::Finite(v) => v,
            Roi::Infinite => f64::INFINITY,
        }
    }
}

impl PartialOrd for Roi {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Roi::Infinite, Roi::Infinite) => Some(Ordering::Equal),
            (Roi::Infinite, Roi::Finite(_)) => Some(Ordering::Greater),
            (Roi::Finite(_), Roi::Infinite) => Some(Ordering::Less),
            (Roi::Finite(a), Roi::Finite(b)) => a.partial_cmp(b),
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {p} is not a probability")))
    }
}

/// Chance of selling in either round: `p1 + (1 - p1) * p2`.
pub fn combine_propensity(p1: f64, p2: f64) -> Result<f64> {
    check_prob("p1", p1)?;
    check_prob("p2", p2)?;
    Ok((p1 + (1.0 - p1) * p2).min(1.0))
}

/// Expected coupon cost given a sale:
/// `(p1 * cost_j + (1 - p1) * p2 * cost_k) / p_combined`, and 0 when `p_combined = 0`.
pub fn combine_cost(p1: f64, p2: f64, cost_j: f64, cost_k: f64) -> Result<f64> {
    check_prob("p1", p1)?;
    check_prob("p2", p2)?;
    if !(cost_j >= 0.0 && cost_k >= 0.0 && cost_j.is_finite() && cost_k.is_finite()) {
        return Err(invalid("coupon costs must be finite and >= 0"));
    }
    let second = (1.0 - p1) * p2;
    let total = p1 + second;
    if total == 0.0 {
        return Ok(0.0);
    }
    if cost_j == cost_k {
        return Ok(cost_j);
    }
    // Convex weights, so that p1 = 0 (w = 1) and p2 = 0 (w = 0) return the
    // round cost exactly.
    let w = second / total;
    Ok((1.0 - w) * cost_j + w * cost_k)
}

/// `(p_combined - p_star) * ltv / cost`.
pub fn roi(p_combined: f64, p_star: f64, ltv: f64, expected_cost: f64) -> Result<Roi> {
    check_prob("p_combined", p_combined)?;
    check_prob("p_star", p_star)?;
    if !(ltv > 0.0 && ltv.is_finite()) {
        return Err(invalid(format!("ltv {ltv} must be positive")));
    }
    if !(expected_cost >= 0.0 && expected_cost.is_finite()) {
        return Err(invalid(format!(
            "expected_cost {expected_cost} must be >= 0"
        )));
    }
    let lift = p_combined - p_star;
    if expected_cost == 0.0 {
        return Ok(if lift > 0.0 {
            Roi::Infinite
        } else {
            Roi::Finite(0.0)
        });
    }
    if lift == 0.0 {
        return Ok(Roi::Finite(0.0));
    }
    Ok(Roi::Finite(lift * ltv / expected_cost))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationPlan {
    pub item_id: String,
    pub j: usize,
    pub k: usize,
    pub round1_coupon: CouponConfig,
    pub round2_coupon: CouponConfig,
    pub attach_delay_h: f64,
    pub p_dagger: f64,
    pub p_ddagger: f64,
    pub p_combined: f64,
    pub expected_cost: f64,
    pub p_star: f64,
    pub lift: f64,
    pub roi: Roi,
    pub feasible: bool,
}

fn check_shapes(preds: &ItemPredictions, set1: &CouponSet, set2: &CouponSet) -> Result<()> {
    if preds.p1.len() != set1.len() || preds.p2.len() != set2.len() {
        return Err(Error::Contract(format!(
            "predictions cover {}x{} arms but the coupon sets have {}x{}",
            preds.p1.len(),
            preds.p2.len(),
            set1.len(),
            set2.len()
        )));
    }
    Ok(())
}

fn arm_costs(set: &CouponSet, price: Yen) -> Result<Vec<f64>> {
    set.arms()
        .iter()
        .map(|a| coupon_cost(a, price).map(|c| c as f64))
        .collect()
}

/// Evaluates one (j, k) cell.
#[allow(clippy::too_many_arguments)]
fn plan_for(
    preds: &ItemPredictions,
    item: &ItemRecord,
    set1: &CouponSet,
    set2: &CouponSet,
    c1: &[f64],
    c2: &[f64],
    j: usize,
    k: usize,
    constraint: &PolicyConstraint,
    attach_delay_h: f64,
) -> Result<AllocationPlan> {
    let (p1, p2) = (preds.p1[j], preds.p2[k]);
    let p_combined = combine_propensity(p1, p2)?;
    let expected_cost = combine_cost(p1, p2, c1[j], c2[k])?;
    let lift = p_combined - preds.p_star;
    Ok(AllocationPlan {
        item_id: item.item_id.clone(),
        j,
        k,
        round1_coupon: set1.arms()[j],
        round2_coupon: set2.arms()[k],
        attach_delay_h,
        p_dagger: p1,
        p_ddagger: p2,
        p_combined,
        expected_cost,
        p_star: preds.p_star,
        lift,
        roi: roi(
            p_combined,
            preds.p_star,
            constraint.ltv(item) as f64,
            expected_cost,
        )?,
        feasible: lift >= constraint.lift_threshold,
    })
}

/// Strict improvement under the ROI order: higher ROI, then lower cost.
/// Candidates arrive in lexicographic (j, k) order, so equal plans keep the earlier cell.
fn better_roi(cand: &AllocationPlan, best: &AllocationPlan) -> bool {
    match cand.roi.partial_cmp(&best.roi) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Equal) => cand.expected_cost < best.expected_cost,
        _ => false,
    }
}

fn better_lift(cand: &AllocationPlan, best: &AllocationPlan) -> bool {
    cand.lift > best.lift || (cand.lift == best.lift && cand.expected_cost < best.expected_cost)
}

/// Best (round-1, round-2) coupon pair for one item.
///
/// Every cell except (none, none) competes. The feasible cell with the highest
/// ROI wins; if no cell clears the lift threshold, the highest-lift cell is
/// returned with `feasible = false`.
pub fn allocate(
    preds: &ItemPredictions,
    item: &ItemRecord,
    set1: &CouponSet,
    set2: &CouponSet,
    constraint: &PolicyConstraint,
    attach_delay_h: f64,
) -> Result<AllocationPlan> {
    check_shapes(preds, set1, set2)?;
    let c1 = arm_costs(set1, item.price_yen)?;
    let c2 = arm_costs(set2, item.price_yen)?;
    let mut best_feasible: Option<AllocationPlan> = None;
    let mut best_lift: Option<AllocationPlan> = None;
    for j in 0..set1.len() {
        for k in 0..set2.len() {
            if j == 0 && k == 0 {
                continue;
            }
            let plan = plan_for(
                preds,
                item,
                set1,
                set2,
                &c1,
                &c2,
                j,
                k,
                constraint,
                attach_delay_h,
            )?;
            if plan.feasible && best_feasible.as_ref().is_none_or(|b| better_roi(&plan, b)) {
                best_feasible = Some(plan.clone());
            }
            if best_lift.as_ref().is_none_or(|b| better_lift(&plan, b)) {
                best_lift = Some(plan);
            }
        }
    }
    Ok(best_feasible
        .or(best_lift)
        .expect("coupon sets have at least two arms"))
}

/// Per-round choice for the independent baseline: the real arm with the
/// highest single-round ROI among arms whose single-round lift clears the
/// threshold, else the highest-lift real arm.
fn pick_round(p: &[f64], costs: &[f64], ltv: f64, threshold: f64) -> Result<usize> {
    let mut best: Option<(usize, Roi, f64)> = None;
    let mut best_lift: Option<(usize, f64, f64)> = None;
    for a in 1..p.len() {
        let lift = p[a] - p[0];
        let r = roi(p[a], p[0], ltv, costs[a])?;
        if lift >= threshold {
            let take = match &best {
                None => true,
                Some((_, br, bc)) => match r.partial_cmp(br) {
                    Some(Ordering::Greater) => true,
                    Some(Ordering::Equal) => costs[a] < *bc,
                    _ => false,
                },
            };
            if take {
                best = Some((a, r, costs[a]));
            }
        }
        let take = match &best_lift {
            None => true,
            Some((_, bl, bc)) => lift > *bl || (lift == *bl && costs[a] < *bc),
        };
        if take {
            best_lift = Some((a, lift, costs[a]));
        }
    }
    Ok(best
        .map(|b| b.0)
        .or(best_lift.map(|b| b.0))
        .expect("coupon sets have at least one real arm"))
}

/// Baseline that optimizes each round on its own, then reports the combined metrics.
pub fn allocate_independent(
    preds: &ItemPredictions,
    item: &ItemRecord,
    set1: &CouponSet,
    set2: &CouponSet,
    constraint: &PolicyConstraint,
    attach_delay_h: f64,
) -> Result<AllocationPlan> {
    check_shapes(preds, set1, set2)?;
    let c1 = arm_costs(set1, item.price_yen)?;
    let c2 = arm_costs(set2, item.price_yen)?;
    let ltv = constraint.ltv(item) as f64;
    let j = pick_round(&preds.p1, &c1, ltv, constraint.lift_threshold)?;
    let k = pick_round(&preds.p2, &c2, ltv, constraint.lift_threshold)?;
    plan_for(
        preds,
        item,
        set1,
        set2,
        &c1,
        &c2,
        j,
        k,
        constraint,
        attach_delay_h,
    )
}

/// Plans the next two rounds for an item that is still unsold.
///
/// Each past round in `history` ages the item by the round gap before the
/// item is re-encoded, so every cycle starts from the item's current state.
pub fn replan(
    item: &ItemRecord,
    history: &[OutcomeRecord],
    pair: &PredictorPair,
    constraint: &PolicyConstraint,
    attach_delay_h: f64,
) -> Result<AllocationPlan> {
    if item.status == crate::domain::ItemStatus::Sold {
        return Err(Error::Contract(format!(
            "item {} is already sold",
            item.item_id
        )));
    }
    let mine: Vec<&OutcomeRecord> = history
        .iter()
        .filter(|r| r.item_id == item.item_id)
        .collect();
    if mine.iter().any(|r| r.sold) {
        return Err(Error::Contract(format!(
            "item {} sold in an earlier round",
            item.item_id
        )));
    }
    let mut current = item.clone();
    current.age_days += mine.len() as f64 * ROUND_GAP_HOURS / 24.0;
    let preds = predict_item(pair, &current, attach_delay_h)?;
    allocate(
        &preds,
        &current,
        &pair.round1_set,
        &pair.round2_set,
        constraint,
        attach_delay_h,
    )
}
