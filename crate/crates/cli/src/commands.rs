//! The five pipeline commands. Each one writes into its own output directory
//! together with a manifest.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use seqcoupon::evaluation::{
    self, bootstrap_uplift, compare_strategies, delay_analysis, CompareSettings,
};
use seqcoupon::io;
use seqcoupon::learner::GridSearch;
use seqcoupon::numfmt::fmt_f64;
use seqcoupon::simulator::AssignmentProbs;
use seqcoupon::uplift::first_round_uplift;
use seqcoupon::{
    generate_catalog, replan, run_rct, train_pair, GroundTruth, ItemRecord, ItemStatus,
    OutcomeRecord, PairTraining, PredictorPair,
};

use crate::config::RunConfig;
use crate::exit::{io_error, CliError, CliResult};
use crate::manifest::Manifest;

/// Progress messages on stderr unless quiet.
#[derive(Clone, Copy, Debug, Default)]
pub struct Reporter {
    pub quiet: bool,
}

impl Reporter {
    pub fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// An output directory being filled, with the manifest that will describe it.
struct Output {
    dir: PathBuf,
    manifest: Manifest,
}

impl Output {
    fn open(dir: &Path, command: &str, cfg: &RunConfig) -> CliResult<Self> {
        let manifest = Manifest::new(command, cfg.simulator.rng_seed, &cfg.to_toml());
        manifest.check_resume(dir)?;
        fs::create_dir_all(dir).map_err(|e| io_error(dir.display(), e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    fn write(&mut self, rel: &str, bytes: Vec<u8>) -> CliResult<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_error(parent.display(), e))?;
        }
        fs::write(&path, &bytes).map_err(|e| io_error(path.display(), e))?;
        self.manifest.output(rel, &bytes);
        Ok(())
    }

    fn write_with(
        &mut self,
        rel: &str,
        f: impl FnOnce(&mut Vec<u8>) -> seqcoupon::Result<()>,
    ) -> CliResult<()> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| io_error(rel, e))?;
        self.write(rel, buf)
    }

    /// Saves the predictor pair under `rel` and records its files.
    fn write_pair(&mut self, rel: &str, pair: &PredictorPair) -> CliResult<()> {
        let dir = self.dir.join(rel);
        pair.save(&dir).map_err(|e| io_error(dir.display(), e))?;
        let mut names: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| io_error(dir.display(), e))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        for name in names {
            let bytes = fs::read(dir.join(&name)).map_err(|e| io_error(&name, e))?;
            self.manifest.output(&format!("{rel}/{name}"), &bytes);
        }
        Ok(())
    }

    fn finish(self) -> CliResult<()> {
        self.manifest.write(&self.dir)
    }
}

fn read_catalog(path: &Path) -> CliResult<Vec<ItemRecord>> {
    io::read_catalog_file(path).map_err(|e| io_error(path.display(), e))
}

fn read_log(path: &Path) -> CliResult<Vec<OutcomeRecord>> {
    io::read_outcomes_file(path).map_err(|e| io_error(path.display(), e))
}

fn load_pair(dir: &Path) -> CliResult<PredictorPair> {
    PredictorPair::load(dir).map_err(|e| match e {
        seqcoupon::Error::SchemaMismatch { .. } => CliError::from(e),
        other => io_error(dir.display(), other),
    })
}

/// Generates a catalog and runs the randomized two-round trial on it.
pub fn simulate(cfg: &RunConfig, out: &Path, rep: Reporter) -> CliResult<()> {
    let mut o = Output::open(out, "simulate", cfg)?;
    let (set1, set2) = cfg.coupon_sets()?;
    let items = generate_catalog(&cfg.simulator)?;
    let gt = GroundTruth::new(&cfg.simulator)?;
    let probs = AssignmentProbs::with_holdout(&set1, &set2, cfg.rct.holdout_prob);
    let logs = run_rct(&gt, &items, &set1, &set2, &probs, cfg.simulator.rng_seed)?;
    rep.say(format!(
        "simulated {} items, {} survivors of round 1",
        items.len(),
        logs.survivors.len()
    ));
    o.write_with(&cfg.io.catalog, |b| io::write_catalog(b, &items))?;
    o.write_with(&cfg.io.round1_log, |b| io::write_outcomes(b, &logs.round1))?;
    o.write_with(&cfg.io.round2_log, |b| io::write_outcomes(b, &logs.round2))?;
    o.manifest.fact("n_items", items.len());
    o.manifest.fact("round1_records", logs.round1.len());
    o.manifest.fact("round2_records", logs.round2.len());
    o.finish()
}

/// CSV of the cross-validation table of both rounds.
pub fn grid_table(first: &GridSearch, second: &GridSearch) -> String {
    let mut s = String::from(
        "round,index,kind,learning_rate,l2,epochs,max_stumps,mean_log_loss,fold_log_losses,prior_folds,selected\n",
    );
    for (round, g) in [(1, first), (2, second)] {
        for row in &g.table {
            let c = &row.config;
            let kind = match c.kind {
                seqcoupon::LearnerKind::Logistic => "logistic",
                seqcoupon::LearnerKind::BoostedStumps => "boosted_stumps",
            };
            let folds: Vec<String> = row.fold_losses.iter().map(|v| fmt_f64(*v)).collect();
            let priors: Vec<String> = row.prior_folds.iter().map(usize::to_string).collect();
            s.push_str(&format!(
                "{round},{},{kind},{},{},{},{},{},{},{},{}\n",
                row.index,
                fmt_f64(c.learning_rate),
                fmt_f64(c.l2),
                c.epochs,
                c.max_stumps,
                fmt_f64(row.mean_log_loss),
                folds.join(";"),
                priors.join(";"),
                row.index == g.best_index
            ));
        }
    }
    s
}

fn fit(
    cfg: &RunConfig,
    items: &[ItemRecord],
    r1: &[OutcomeRecord],
    r2: &[OutcomeRecord],
) -> CliResult<PairTraining> {
    let (set1, set2) = cfg.coupon_sets()?;
    Ok(train_pair(
        r1,
        r2,
        items,
        &set1,
        &set2,
        &cfg.training_options(),
    )?)
}

fn save_training(o: &mut Output, cfg: &RunConfig, t: &PairTraining) -> CliResult<()> {
    o.write_pair(&cfg.io.model_dir, &t.pair)?;
    o.write(
        &cfg.io.grid_table,
        grid_table(&t.first_grid, &t.second_grid).into_bytes(),
    )?;
    o.manifest
        .fact("round1_best_grid_index", t.first_grid.best_index);
    o.manifest
        .fact("round2_best_grid_index", t.second_grid.best_index);
    Ok(())
}

/// Fits the predictor pair on the trial files found in `data`.
pub fn train(cfg: &RunConfig, data: &Path, out: &Path, rep: Reporter) -> CliResult<()> {
    let items = read_catalog(&data.join(&cfg.io.catalog))?;
    let r1 = read_log(&data.join(&cfg.io.round1_log))?;
    let r2 = read_log(&data.join(&cfg.io.round2_log))?;
    let mut o = Output::open(out, "train", cfg)?;
    let t = fit(cfg, &items, &r1, &r2)?;
    rep.say(format!(
        "trained on {} round-1 and {} round-2 records",
        r1.len(),
        r2.len()
    ));
    save_training(&mut o, cfg, &t)?;
    o.finish()
}

/// Plans both rounds for every unsold catalog item. Items sold in `history`
/// are skipped; items with unsold history are aged before planning.
pub fn allocate(
    cfg: &RunConfig,
    model: &Path,
    catalog: &Path,
    history: &[PathBuf],
    out: &Path,
    rep: Reporter,
) -> CliResult<()> {
    let pair = load_pair(model)?;
    let mut items = read_catalog(catalog)?;
    let mut past: Vec<OutcomeRecord> = Vec::new();
    for p in history {
        past.extend(read_log(p)?);
    }
    let mut o = Output::open(out, "allocate", cfg)?;
    let constraint = cfg.constraint()?;
    let mut by_item: HashMap<&str, Vec<OutcomeRecord>> = HashMap::new();
    for r in &past {
        by_item
            .entry(r.item_id.as_str())
            .or_default()
            .push(r.clone());
    }
    items.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    let mut plans = Vec::new();
    for item in &items {
        let mine = by_item
            .get(item.item_id.as_str())
            .map_or(&[][..], Vec::as_slice);
        if item.status == ItemStatus::Sold || mine.iter().any(|r| r.sold) {
            continue;
        }
        plans.push(replan(
            item,
            mine,
            &pair,
            &constraint,
            cfg.policy.attach_delay_h,
        )?);
    }
    rep.say(format!(
        "planned {} of {} items ({} feasible)",
        plans.len(),
        items.len(),
        plans.iter().filter(|p| p.feasible).count()
    ));
    o.write_with(&cfg.io.plans, |b| io::write_plans(b, &plans))?;
    o.manifest.fact("n_plans", plans.len());
    o.manifest
        .fact("n_feasible", plans.iter().filter(|p| p.feasible).count());
    o.finish()
}

/// Delay tables for the round-1 trial log, and the cumulative uplift curve
/// with bootstrap bands when a model is given.
pub fn evaluate(
    cfg: &RunConfig,
    data: &Path,
    model: Option<&Path>,
    out: &Path,
    rep: Reporter,
) -> CliResult<()> {
    let log = read_log(&data.join(&cfg.io.round1_log))?;
    let pair = model.map(load_pair).transpose()?;
    let items = match pair {
        Some(_) => read_catalog(&data.join(&cfg.io.catalog))?,
        None => Vec::new(),
    };
    let mut o = Output::open(out, "evaluate", cfg)?;
    let ev = &cfg.evaluation;
    let rows = delay_analysis(&log, ev.bucket_width_h, ev.post_attach_horizon_h)?;
    o.write_with(&cfg.io.delay_table, |b| io::write_delay_rows(b, &rows))?;
    let (treated, control): (Vec<OutcomeRecord>, Vec<OutcomeRecord>) =
        log.iter().cloned().partition(|r| !r.coupon.is_none());
    let (lift, se) = evaluation::str_lift(&treated, &control)?;
    o.manifest.fact("lift_str", fmt_f64(lift));
    o.manifest.fact("lift_str_stderr", fmt_f64(se));
    rep.say(format!(
        "round-1 lift STR {} (se {})",
        fmt_f64(lift),
        fmt_f64(se)
    ));

    if let Some(pair) = pair {
        let index: HashMap<&str, &ItemRecord> =
            items.iter().map(|i| (i.item_id.as_str(), i)).collect();
        let mut scores = Vec::with_capacity(log.len());
        for r in &log {
            let item = index.get(r.item_id.as_str()).ok_or_else(|| {
                CliError::Io(format!(
                    "log references item {} missing from the catalog",
                    r.item_id
                ))
            })?;
            scores.push(first_round_uplift(
                &pair.first,
                &pair.round1_set,
                item,
                r.attach_delay_h,
            )?);
        }
        let treated: Vec<bool> = log.iter().map(|r| !r.coupon.is_none()).collect();
        let sold: Vec<bool> = log.iter().map(|r| r.sold).collect();
        let (curve, _) = bootstrap_uplift(
            &scores,
            &treated,
            &sold,
            ev.deciles,
            ev.bootstrap_b,
            cfg.simulator.rng_seed,
        )?;
        o.write_with(&cfg.io.uplift_curve, |b| io::write_curve(b, &curve))?;
        o.manifest
            .fact("random_reference", fmt_f64(curve.random_reference));
        if let Some(slope) = curve.decile_slope() {
            o.manifest.fact("decile_slope", fmt_f64(slope));
        }
    }
    o.finish()
}

/// Trains on a fresh trial from the configured seed, then rolls out every
/// strategy over the evaluation seeds.
pub fn compare(cfg: &RunConfig, out: &Path, rep: Reporter) -> CliResult<()> {
    let mut o = Output::open(out, "compare", cfg)?;
    let (set1, set2) = cfg.coupon_sets()?;
    let items = generate_catalog(&cfg.simulator)?;
    let gt = GroundTruth::new(&cfg.simulator)?;
    let probs = AssignmentProbs::with_holdout(&set1, &set2, cfg.rct.holdout_prob);
    let logs = run_rct(&gt, &items, &set1, &set2, &probs, cfg.simulator.rng_seed)?;
    let t = fit(cfg, &items, &logs.round1, &logs.round2)?;
    rep.say(format!("trained on a {}-item trial", items.len()));
    save_training(&mut o, cfg, &t)?;
    let settings = CompareSettings::uniform(
        cfg.evaluation.n_items,
        cfg.evaluation.seeds.clone(),
        cfg.constraint()?,
        cfg.policy.attach_delay_h,
        &t.pair,
    );
    let report = compare_strategies(&cfg.simulator, &t.pair, &settings)?;
    let text = report.to_text();
    rep.say(text.trim_end());
    o.write(&cfg.io.report, text.into_bytes())?;
    o.finish()
}
