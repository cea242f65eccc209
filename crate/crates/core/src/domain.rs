//! Shared record types, coupon cost arithmetic and feature encoding.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Integer yen.
pub type Yen = i64;

/// Hours between the round-1 attach and the round-2 attach.
pub const ROUND_GAP_HOURS: f64 = 72.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Round {
    First,
    Second,
}

impl Round {
    pub fn number(self) -> u8 {
        match self {
            Round::First => 1,
            Round::Second => 2,
        }
    }
}

impl TryFrom<u8> for Round {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Round::First),
            2 => Ok(Round::Second),
            other => Err(invalid(format!("round must be 1 or 2, got {other}"))),
        }
    }
}

impl From<Round> for u8 {
    fn from(r: Round) -> u8 {
        r.number()
    }
}

/// One treatment arm.
///
/// The no-coupon arm has `discount_pct == 0`, zero cap and zero validity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouponConfig {
    pub discount_pct: u32,
    pub validity_hours: f64,
    pub cap_yen: Yen,
}

impl CouponConfig {
    pub const NONE: CouponConfig = CouponConfig {
        discount_pct: 0,
        validity_hours: 0.0,
        cap_yen: 0,
    };

    pub fn new(discount_pct: u32, validity_hours: f64, cap_yen: Yen) -> Result<Self> {
        if discount_pct == 0 {
            if cap_yen != 0 {
                return Err(invalid("the no-coupon arm must have cap_yen = 0"));
            }
            return Ok(Self::NONE);
        }
        if discount_pct >= 100 {
            return Err(invalid(format!(
                "discount_pct {discount_pct} must be below 100"
            )));
        }
        if !(validity_hours.is_finite() && validity_hours > 0.0) {
            return Err(invalid(format!(
                "validity_hours {validity_hours} must be positive"
            )));
        }
        if cap_yen <= 0 {
            return Err(invalid(format!(
                "cap_yen {cap_yen} must be positive for a real coupon"
            )));
        }
        Ok(Self {
            discount_pct,
            validity_hours,
            cap_yen,
        })
    }

    pub fn is_none(&self) -> bool {
        self.discount_pct == 0
    }
}

impl fmt::Display for CouponConfig {
    /// `none` or `<pct>%/<hours>h/<cap>`, the same grammar [`str::parse`] accepts.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_none() {
            write!(f, "none")
        } else {
            write!(
                f,
                "{}%/{}h/{}",
                self.discount_pct, self.validity_hours, self.cap_yen
            )
        }
    }
}

impl std::str::FromStr for CouponConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") {
            return Ok(Self::NONE);
        }
        let parts: Vec<&str> = s.split('/').map(str::trim).collect();
        let bad = || {
            invalid(format!(
                "coupon `{s}` is not `none` or `<pct>%/<hours>h/<cap>`"
            ))
        };
        if parts.len() != 3 {
            return Err(bad());
        }
        let pct = parts[0]
            .strip_suffix('%')
            .and_then(|p| p.parse::<u32>().ok())
            .ok_or_else(bad)?;
        let hours = parts[1]
            .strip_suffix('h')
            .and_then(|h| h.parse::<f64>().ok())
            .ok_or_else(bad)?;
        let cap = parts[2]
            .trim_end_matches("yen")
            .parse::<Yen>()
            .map_err(|_| bad())?;
        Self::new(pct, hours, cap)
    }
}

/// Ordered treatment arms for one round. Arm 0 is always the no-coupon arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouponSet {
    pub role: Round,
    arms: Vec<CouponConfig>,
}

impl CouponSet {
    pub fn new(role: Round, arms: Vec<CouponConfig>) -> Result<Self> {
        if arms.len() < 2 {
            return Err(invalid(
                "a coupon set needs the no-coupon arm and at least one coupon",
            ));
        }
        if !arms[0].is_none() {
            return Err(invalid("arm 0 of a coupon set must be the no-coupon arm"));
        }
        for (i, a) in arms.iter().enumerate() {
            if i > 0 && a.is_none() {
                return Err(invalid(
                    "the no-coupon arm may only appear once, at index 0",
                ));
            }
            if arms[..i].contains(a) {
                return Err(invalid(format!("duplicate arm {a} in coupon set")));
            }
        }
        Ok(Self { role, arms })
    }

    pub fn arms(&self) -> &[CouponConfig] {
        &self.arms
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn position(&self, coupon: &CouponConfig) -> Option<usize> {
        self.arms.iter().position(|a| a == coupon)
    }

    /// `{5,10,15}% x {10h, 72h}` capped at 1000 yen, plus the no-coupon arm.
    pub fn default_grid(role: Round) -> Self {
        let mut arms = vec![CouponConfig::NONE];
        for pct in [5, 10, 15] {
            for hours in [10.0, 72.0] {
                arms.push(CouponConfig::new(pct, hours, 1000).expect("valid default arm"));
            }
        }
        Self::new(role, arms).expect("valid default grid")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemStatus {
    #[default]
    Unsold,
    Sold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub seller_id: String,
    pub price_yen: Yen,
    /// 1 (poor) ..= 5 (new).
    pub condition: u8,
    pub age_days: f64,
    pub likes: u32,
    pub demand_index: f64,
    /// Position in the yearly cycle, in `[0, 1)`.
    pub season_phase: f64,
    pub seller_ltv_yen: Yen,
    /// Hours since epoch of the key action (a like) that triggers the cycle.
    pub key_action_ts: f64,
    #[serde(default)]
    pub status: ItemStatus,
}

impl ItemRecord {
    pub fn validate(&self) -> Result<()> {
        if self.price_yen <= 0 {
            return Err(invalid(format!(
                "item {}: price_yen must be positive",
                self.item_id
            )));
        }
        if self.seller_ltv_yen <= 0 {
            return Err(invalid(format!(
                "item {}: seller_ltv_yen must be positive",
                self.item_id
            )));
        }
        if !(1..=5).contains(&self.condition) {
            return Err(invalid(format!(
                "item {}: condition must be in 1..=5",
                self.item_id
            )));
        }
        if !(self.age_days.is_finite() && self.age_days >= 0.0) {
            return Err(invalid(format!(
                "item {}: age_days must be >= 0",
                self.item_id
            )));
        }
        if !self.demand_index.is_finite() || !self.key_action_ts.is_finite() {
            return Err(invalid(format!("item {}: non-finite field", self.item_id)));
        }
        if !(0.0..1.0).contains(&self.season_phase) {
            return Err(invalid(format!(
                "item {}: season_phase must be in [0,1)",
                self.item_id
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemaId(pub String);

impl SchemaId {
    pub fn round1() -> Self {
        SchemaId(ROUND1_SCHEMA.to_string())
    }
    pub fn round2() -> Self {
        SchemaId(ROUND2_SCHEMA.to_string())
    }
}

impl fmt::Display for SchemaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub const ROUND1_SCHEMA: &str = "round1/v1";
pub const ROUND2_SCHEMA: &str = "round2/v1";

/// Coordinate names of the round-1 encoding, in order.
pub const ROUND1_FEATURES: [&str; 11] = [
    "log_price",
    "condition",
    "age_days",
    "likes",
    "demand_index",
    "season_sin",
    "season_cos",
    "attach_delay_h",
    "discount_pct",
    "log1p_validity_h",
    "cap_kyen",
];

/// Round-2 layout: the round-1 layout with coordinate 7 holding the elapsed
/// listing age (hours) at the round-2 attach, plus the mean round-1 propensity.
pub const ROUND2_FEATURES: [&str; 12] = [
    "log_price",
    "condition",
    "age_days",
    "likes",
    "demand_index",
    "season_sin",
    "season_cos",
    "elapsed_age_h",
    "discount_pct",
    "log1p_validity_h",
    "cap_kyen",
    "mean_round1_propensity",
];

/// Coordinates that describe the coupon rather than the item.
pub const TREATMENT_COORDS: [usize; 3] = [8, 9, 10];
pub const DISCOUNT_COORD: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema: SchemaId,
}

/// Redeemed cost of `coupon` on an item listed at `price_yen`:
/// `min(floor(discount_pct * price / 100), cap)`, and 0 for the no-coupon arm.
pub fn coupon_cost(coupon: &CouponConfig, price_yen: Yen) -> Result<Yen> {
    if price_yen <= 0 {
        return Err(invalid(format!(
            "price_yen must be positive, got {price_yen}"
        )));
    }
    if coupon.is_none() {
        return Ok(0);
    }
    let raw = i128::from(coupon.discount_pct) * i128::from(price_yen) / 100;
    Ok(raw.min(i128::from(coupon.cap_yen)) as Yen)
}

fn item_block(item: &ItemRecord) -> [f64; 7] {
    let phase = TAU * item.season_phase;
    [
        (item.price_yen as f64).ln(),
        f64::from(item.condition),
        item.age_days,
        f64::from(item.likes),
        item.demand_index,
        phase.sin(),
        phase.cos(),
    ]
}

fn coupon_block(coupon: &CouponConfig) -> [f64; 3] {
    if coupon.is_none() {
        return [0.0; 3];
    }
    [
        f64::from(coupon.discount_pct),
        coupon.validity_hours.ln_1p(),
        coupon.cap_yen as f64 / 1000.0,
    ]
}

pub fn encode_round1(
    item: &ItemRecord,
    coupon: &CouponConfig,
    attach_delay_h: f64,
) -> Result<FeatureVector> {
    item.validate()?;
    if !(attach_delay_h.is_finite() && attach_delay_h >= 0.0) {
        return Err(invalid(format!(
            "attach_delay_h must be >= 0, got {attach_delay_h}"
        )));
    }
    let mut values = Vec::with_capacity(ROUND1_FEATURES.len());
    values.extend_from_slice(&item_block(item));
    values.push(attach_delay_h);
    values.extend_from_slice(&coupon_block(coupon));
    Ok(FeatureVector {
        values,
        schema: SchemaId::round1(),
    })
}

pub fn encode_round2(
    item: &ItemRecord,
    coupon: &CouponConfig,
    mean_p1: f64,
) -> Result<FeatureVector> {
    item.validate()?;
    if !(0.0..=1.0).contains(&mean_p1) {
        return Err(invalid(format!("mean_p1 must be in [0,1], got {mean_p1}")));
    }
    let mut values = Vec::with_capacity(ROUND2_FEATURES.len());
    values.extend_from_slice(&item_block(item));
    values.push(item.age_days * 24.0 + ROUND_GAP_HOURS);
    values.extend_from_slice(&coupon_block(coupon));
    values.push(mean_p1);
    Ok(FeatureVector {
        values,
        schema: SchemaId::round2(),
    })
}

/// One item-round observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub item_id: String,
    pub round: Round,
    pub coupon: CouponConfig,
    pub attach_delay_h: f64,
    pub sold: bool,
    pub purchase_delay_h: Option<f64>,
    pub sale_price_yen: Option<Yen>,
    pub coupon_cost_yen: Option<Yen>,
}

impl OutcomeRecord {
    pub fn unsold(item_id: &str, round: Round, coupon: CouponConfig, attach_delay_h: f64) -> Self {
        Self {
            item_id: item_id.to_string(),
            round,
            coupon,
            attach_delay_h,
            sold: false,
            purchase_delay_h: None,
            sale_price_yen: None,
            coupon_cost_yen: None,
        }
    }

    pub fn sold(
        item: &ItemRecord,
        round: Round,
        coupon: CouponConfig,
        attach_delay_h: f64,
        purchase_delay_h: f64,
    ) -> Result<Self> {
        Ok(Self {
            item_id: item.item_id.clone(),
            round,
            coupon,
            attach_delay_h,
            sold: true,
            purchase_delay_h: Some(purchase_delay_h),
            sale_price_yen: Some(item.price_yen),
            coupon_cost_yen: Some(coupon_cost(&coupon, item.price_yen)?),
        })
    }

    /// Checks the presence rules and the validity-window bound.
    pub fn validate(&self) -> Result<()> {
        let present = [
            self.purchase_delay_h.is_some(),
            self.sale_price_yen.is_some(),
            self.coupon_cost_yen.is_some(),
        ];
        if present.iter().any(|p| *p != self.sold) {
            return Err(invalid(format!(
                "item {}: sale fields must be present iff sold",
                self.item_id
            )));
        }
        if let (Some(t), false) = (self.purchase_delay_h, self.coupon.is_none()) {
            if t > self.coupon.validity_hours {
                return Err(invalid(format!(
                    "item {}: coupon sale at {t}h is outside the {}h validity window",
                    self.item_id, self.coupon.validity_hours
                )));
            }
        }
        if let (Some(price), Some(cost)) = (self.sale_price_yen, self.coupon_cost_yen) {
            if coupon_cost(&self.coupon, price)? != cost {
                return Err(invalid(format!(
                    "item {}: coupon_cost_yen does not match the coupon",
                    self.item_id
                )));
            }
        }
        Ok(())
    }
}
