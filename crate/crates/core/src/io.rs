//! CSV readers and writers for catalogs, outcome logs, plans and analysis tables.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::decision::AllocationPlan;
use crate::domain::{CouponConfig, ItemRecord, ItemStatus, OutcomeRecord, Round, Yen};
use crate::error::{Error, Result};
use crate::evaluation::{DelayRow, UpliftCurve};
use crate::numfmt::{fmt_f64, fmt_opt, parse_f64};

pub const CATALOG_HEADER: [&str; 10] = [
    "item_id",
    "seller_id",
    "price_yen",
    "condition",
    "age_days",
    "likes",
    "demand_index",
    "season_phase",
    "seller_ltv_yen",
    "key_action_ts",
];

pub const OUTCOME_HEADER: [&str; 10] = [
    "item_id",
    "round",
    "discount_pct",
    "validity_hours",
    "cap_yen",
    "attach_delay_h",
    "sold",
    "purchase_delay_h",
    "sale_price_yen",
    "coupon_cost_yen",
];

pub const PLAN_HEADER: [&str; 16] = [
    "item_id",
    "j_discount_pct",
    "j_validity_h",
    "j_cap",
    "k_discount_pct",
    "k_validity_h",
    "k_cap",
    "attach_delay_h",
    "p_dagger",
    "p_ddagger",
    "p_combined",
    "p_star",
    "lift",
    "expected_cost",
    "roi",
    "feasible",
];

pub const CURVE_HEADER: [&str; 4] = ["fraction", "uplift", "lo", "hi"];
pub const DELAY_HEADER: [&str; 4] = ["bucket_start_h", "metric", "value", "n"];

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn reader<R: Read>(r: R, header: &[&str]) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let found: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if found != header {
        return Err(Error::Parse(format!(
            "unexpected header `{}`, expected `{}`",
            found.join(","),
            header.join(",")
        )));
    }
    Ok(rdr)
}

struct Fields<'a> {
    rec: &'a csv::StringRecord,
    line: u64,
    header: &'a [&'a str],
}

impl Fields<'_> {
    fn raw(&self, i: usize) -> &str {
        self.rec.get(i).unwrap_or("").trim()
    }

    fn err(&self, i: usize, what: &str) -> Error {
        Error::Parse(format!(
            "line {}: column `{}`: {what} (got `{}`)",
            self.line,
            self.header[i],
            self.raw(i)
        ))
    }

    fn parse<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        self.raw(i).parse().map_err(|_| self.err(i, "cannot parse"))
    }

    fn real(&self, i: usize) -> Result<f64> {
        parse_f64(self.raw(i)).ok_or_else(|| self.err(i, "not a number"))
    }

    fn opt_real(&self, i: usize) -> Result<Option<f64>> {
        if self.raw(i).is_empty() {
            Ok(None)
        } else {
            self.real(i).map(Some)
        }
    }

    fn opt_int(&self, i: usize) -> Result<Option<Yen>> {
        if self.raw(i).is_empty() {
            Ok(None)
        } else {
            self.parse(i).map(Some)
        }
    }

    fn boolean(&self, i: usize) -> Result<bool> {
        match self.raw(i) {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            _ => Err(self.err(i, "expected true or false")),
        }
    }
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

pub fn write_catalog<W: Write>(w: W, items: &[ItemRecord]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(CATALOG_HEADER)?;
    for it in items {
        wr.write_record([
            it.item_id.clone(),
            it.seller_id.clone(),
            it.price_yen.to_string(),
            it.condition.to_string(),
            fmt_f64(it.age_days),
            it.likes.to_string(),
            fmt_f64(it.demand_index),
            fmt_f64(it.season_phase),
            it.seller_ltv_yen.to_string(),
            fmt_f64(it.key_action_ts),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn catalog_to_bytes(items: &[ItemRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_catalog(&mut buf, items)?;
    Ok(buf)
}

pub fn read_catalog<R: Read>(r: R) -> Result<Vec<ItemRecord>> {
    let mut rdr = reader(r, &CATALOG_HEADER)?;
    let mut items = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = Fields {
            rec: &rec,
            line: line_of(&rec),
            header: &CATALOG_HEADER,
        };
        let it = ItemRecord {
            item_id: f.raw(0).to_string(),
            seller_id: f.raw(1).to_string(),
            price_yen: f.parse(2)?,
            condition: f.parse(3)?,
            age_days: f.real(4)?,
            likes: f.parse(5)?,
            demand_index: f.real(6)?,
            season_phase: f.real(7)?,
            seller_ltv_yen: f.parse(8)?,
            key_action_ts: f.real(9)?,
            status: ItemStatus::Unsold,
        };
        it.validate()
            .map_err(|e| Error::Parse(format!("line {}: {e}", f.line)))?;
        items.push(it);
    }
    Ok(items)
}

pub fn write_outcomes<W: Write>(w: W, log: &[OutcomeRecord]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(OUTCOME_HEADER)?;
    for r in log {
        wr.write_record([
            r.item_id.clone(),
            r.round.number().to_string(),
            r.coupon.discount_pct.to_string(),
            fmt_f64(r.coupon.validity_hours),
            r.coupon.cap_yen.to_string(),
            fmt_f64(r.attach_delay_h),
            r.sold.to_string(),
            fmt_opt(r.purchase_delay_h),
            r.sale_price_yen.map(|v| v.to_string()).unwrap_or_default(),
            r.coupon_cost_yen.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_outcomes<R: Read>(r: R) -> Result<Vec<OutcomeRecord>> {
    let mut rdr = reader(r, &OUTCOME_HEADER)?;
    let mut log = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = Fields {
            rec: &rec,
            line: line_of(&rec),
            header: &OUTCOME_HEADER,
        };
        let round =
            Round::try_from(f.parse::<u8>(1)?).map_err(|_| f.err(1, "round must be 1 or 2"))?;
        let pct: u32 = f.parse(2)?;
        let coupon = if pct == 0 {
            CouponConfig::NONE
        } else {
            CouponConfig::new(pct, f.real(3)?, f.parse(4)?)
                .map_err(|e| Error::Parse(format!("line {}: {e}", f.line)))?
        };
        let out = OutcomeRecord {
            item_id: f.raw(0).to_string(),
            round,
            coupon,
            attach_delay_h: f.real(5)?,
            sold: f.boolean(6)?,
            purchase_delay_h: f.opt_real(7)?,
            sale_price_yen: f.opt_int(8)?,
            coupon_cost_yen: f.opt_int(9)?,
        };
        // Written values are rounded to 12 digits; allow for that at the validity edge.
        let mut check = out.clone();
        if let (Some(t), false) = (check.purchase_delay_h, coupon.is_none()) {
            check.purchase_delay_h = Some(t.min(coupon.validity_hours));
        }
        check
            .validate()
            .map_err(|e| Error::Parse(format!("line {}: {e}", f.line)))?;
        log.push(out);
    }
    Ok(log)
}

pub fn write_plans<W: Write>(w: W, plans: &[AllocationPlan]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(PLAN_HEADER)?;
    for p in plans {
        wr.write_record([
            p.item_id.clone(),
            p.round1_coupon.discount_pct.to_string(),
            fmt_f64(p.round1_coupon.validity_hours),
            p.round1_coupon.cap_yen.to_string(),
            p.round2_coupon.discount_pct.to_string(),
            fmt_f64(p.round2_coupon.validity_hours),
            p.round2_coupon.cap_yen.to_string(),
            fmt_f64(p.attach_delay_h),
            fmt_f64(p.p_dagger),
            fmt_f64(p.p_ddagger),
            fmt_f64(p.p_combined),
            fmt_f64(p.p_star),
            fmt_f64(p.lift),
            fmt_f64(p.expected_cost),
            fmt_f64(p.roi.value()),
            p.feasible.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Plan row as read back from a plan file.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanRow {
    pub item_id: String,
    pub round1_coupon: CouponConfig,
    pub round2_coupon: CouponConfig,
    pub attach_delay_h: f64,
    pub p_dagger: f64,
    pub p_ddagger: f64,
    pub p_combined: f64,
    pub p_star: f64,
    pub lift: f64,
    pub expected_cost: f64,
    pub roi: f64,
    pub feasible: bool,
}

pub fn read_plans<R: Read>(r: R) -> Result<Vec<PlanRow>> {
    let mut rdr = reader(r, &PLAN_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = Fields {
            rec: &rec,
            line: line_of(&rec),
            header: &PLAN_HEADER,
        };
        let coupon = |i: usize| -> Result<CouponConfig> {
            let pct: u32 = f.parse(i)?;
            if pct == 0 {
                return Ok(CouponConfig::NONE);
            }
            CouponConfig::new(pct, f.real(i + 1)?, f.parse(i + 2)?)
                .map_err(|e| Error::Parse(format!("line {}: {e}", f.line)))
        };
        rows.push(PlanRow {
            item_id: f.raw(0).to_string(),
            round1_coupon: coupon(1)?,
            round2_coupon: coupon(4)?,
            attach_delay_h: f.real(7)?,
            p_dagger: f.real(8)?,
            p_ddagger: f.real(9)?,
            p_combined: f.real(10)?,
            p_star: f.real(11)?,
            lift: f.real(12)?,
            expected_cost: f.real(13)?,
            roi: f.real(14)?,
            feasible: f.boolean(15)?,
        });
    }
    Ok(rows)
}

pub fn write_curve<W: Write>(w: W, curve: &UpliftCurve) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(CURVE_HEADER)?;
    for (i, (q, u)) in curve.points.iter().enumerate() {
        let band = curve.bands.as_ref().and_then(|b| b[i]);
        wr.write_record([
            fmt_f64(*q),
            fmt_opt(*u),
            fmt_opt(band.map(|b| b.0)),
            fmt_opt(band.map(|b| b.1)),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_delay_rows<W: Write>(w: W, rows: &[DelayRow]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(DELAY_HEADER)?;
    for r in rows {
        wr.write_record([
            fmt_f64(r.bucket_start_h),
            r.metric.to_string(),
            fmt_opt(r.value),
            r.n.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_catalog_file(path: &Path) -> Result<Vec<ItemRecord>> {
    read_catalog(File::open(path)?)
}

pub fn read_outcomes_file(path: &Path) -> Result<Vec<OutcomeRecord>> {
    read_outcomes(File::open(path)?)
}
