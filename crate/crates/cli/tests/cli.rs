//! End-to-end runs of the `seqcoupon` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use seqcoupon::io::{read_catalog_file, read_outcomes_file, read_plans, PlanRow};
use seqcoupon::{
    combine_cost, coupon_cost, predict_item, roi, ItemRecord, PolicyConstraint, PredictorPair,
};
use tempfile::TempDir;

const SMALL: &str = r#"
[simulator]
n_items = 1500
[learner]
k_folds = 2
[[learner.grid]]
kind = "logistic"
[evaluation]
seeds = [7]
n_items = 800
bootstrap_b = 20
"#;

struct Env {
    dir: TempDir,
}

impl Env {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.toml"), config).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        let config = self.path("run.toml");
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_seqcoupon"));
        cmd.arg(args[0])
            .arg("--config")
            .arg(&config)
            .arg("--quiet")
            .current_dir(self.dir.path());
        cmd.args(&args[1..]);
        cmd.output().unwrap()
    }

    fn ok(&self, args: &[&str]) {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }

    fn simulate_and_train(&self) {
        self.ok(&["simulate", "--out", "sim"]);
        self.ok(&["train", "--data", "sim", "--out", "train"]);
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

fn plans(path: &Path) -> Vec<PlanRow> {
    read_plans(fs::File::open(path).unwrap()).unwrap()
}

#[test]
fn empty_catalog_gives_header_only_files() {
    let env = Env::new("[simulator]\nn_items = 0\n");
    env.ok(&["simulate", "--out", "sim"]);
    for f in ["catalog.csv", "rct_round1.csv", "rct_round2.csv"] {
        assert_eq!(lines(&env.path("sim").join(f)).len(), 1, "{f}");
    }
    let small = Env::new(SMALL);
    small.simulate_and_train();
    let out = env.run(&[
        "allocate",
        "--model",
        small.path("train/model").to_str().unwrap(),
        "--catalog",
        "sim/catalog.csv",
        "--out",
        "plan",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(lines(&env.path("plan/plans.csv")).len(), 1);
}

#[test]
fn simulate_row_counts_match_the_trial() {
    let env = Env::new(SMALL);
    env.ok(&["simulate", "--out", "sim"]);
    let items = read_catalog_file(&env.path("sim/catalog.csv")).unwrap();
    let r1 = read_outcomes_file(&env.path("sim/rct_round1.csv")).unwrap();
    let r2 = read_outcomes_file(&env.path("sim/rct_round2.csv")).unwrap();
    assert_eq!(items.len(), 1500);
    assert_eq!(r1.len(), 1500);
    assert_eq!(r2.len(), r1.iter().filter(|r| !r.sold).count());
    let manifest = fs::read_to_string(env.path("sim/manifest.txt")).unwrap();
    assert!(manifest.contains("fact.n_items = 1500"));
    assert!(manifest.contains(&format!("fact.round2_records = {}", r2.len())));
}

#[test]
fn bad_config_exits_2_with_location() {
    let env = Env::new("[simulator]\nn_items = 10\nn_itemz = 3\n");
    let out = env.run(&["simulate", "--out", "sim"]);
    assert_eq!(code(&out), 2);
    let msg = stderr(&out);
    assert!(msg.contains("n_itemz") && msg.contains("line 3"), "{msg}");
    let env = Env::new("[policy]\nlift_threshold = 1.5\n");
    assert_eq!(code(&env.run(&["simulate", "--out", "sim"])), 2);
    assert!(!env.path("sim").exists());
}

#[test]
fn missing_input_and_foreign_manifest_exit_3() {
    let env = Env::new(SMALL);
    let out = env.run(&["train", "--data", "nowhere", "--out", "train"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("catalog.csv"));

    env.ok(&["simulate", "--out", "sim"]);
    let out = env.run(&["simulate", "--out", "sim", "--seed", "99"]);
    assert_eq!(code(&out), 3);
    assert!(
        stderr(&out).contains("refusing to overwrite"),
        "{}",
        stderr(&out)
    );
    let out = env.run(&["train", "--data", "sim", "--out", "sim"]);
    assert_eq!(code(&out), 3);
}

fn rewrite_log(path: &Path, keep: impl Fn(&str) -> bool, edit: impl Fn(&str) -> String) {
    let text = fs::read_to_string(path).unwrap();
    let mut it = text.lines();
    let mut out = vec![it.next().unwrap().to_string()];
    out.extend(it.filter(|l| keep(l)).map(edit));
    fs::write(path, out.join("\n") + "\n").unwrap();
}

/// Sets the coupon columns of an outcome row to "no coupon" and clears the cost.
fn strip_coupon(line: &str) -> String {
    let mut f: Vec<String> = line.split(',').map(str::to_string).collect();
    f[2] = "0".into();
    f[3] = "0".into();
    f[4] = "0".into();
    if f[6] == "true" {
        f[9] = "0".into();
    }
    f.join(",")
}

#[test]
fn single_arm_log_exits_4() {
    let env = Env::new(SMALL);
    env.ok(&["simulate", "--out", "sim"]);
    rewrite_log(&env.path("sim/rct_round1.csv"), |_| true, strip_coupon);
    let out = env.run(&["train", "--data", "sim", "--out", "train"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("distinct arm"));
}

#[test]
fn tampered_model_schema_exits_5() {
    let env = Env::new(SMALL);
    env.simulate_and_train();
    for f in ["train/model/pair.json", "train/model/first.model.json"] {
        let p = env.path(f);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("round1/v1"));
        fs::write(&p, text.replace("round1/v1", "round1/v0")).unwrap();
    }
    let out = env.run(&[
        "allocate",
        "--model",
        "train/model",
        "--catalog",
        "sim/catalog.csv",
        "--out",
        "plan",
    ]);
    assert_eq!(code(&out), 5, "{}", stderr(&out));
}

#[test]
fn log_without_holdout_exits_6() {
    let env = Env::new(SMALL);
    env.ok(&["simulate", "--out", "sim"]);
    rewrite_log(
        &env.path("sim/rct_round1.csv"),
        |l| !l.split(',').nth(2).is_some_and(|d| d == "0"),
        str::to_string,
    );
    let out = env.run(&["evaluate", "--data", "sim", "--out", "eval"]);
    assert_eq!(code(&out), 6, "{}", stderr(&out));
}

/// Exhaustive choice over every (j, k) cell except (none, none).
fn brute_force(
    pair: &PredictorPair,
    item: &ItemRecord,
    c: &PolicyConstraint,
    delay: f64,
) -> (usize, usize, bool) {
    let p = predict_item(pair, item, delay).unwrap();
    let ltv = c.ltv_override.unwrap_or(item.seller_ltv_yen) as f64;
    let cost = |arm| coupon_cost(arm, item.price_yen).unwrap() as f64;
    let mut cells = Vec::new();
    for (j, a) in pair.round1_set.arms().iter().enumerate() {
        for (k, b) in pair.round2_set.arms().iter().enumerate() {
            if j == 0 && k == 0 {
                continue;
            }
            let pc = p.p1[j] + (1.0 - p.p1[j]) * p.p2[k];
            let ec = combine_cost(p.p1[j], p.p2[k], cost(a), cost(b)).unwrap();
            let r = roi(pc, p.p_star, ltv, ec).unwrap();
            cells.push((j, k, pc - p.p_star, ec, r));
        }
    }
    let feasible: Vec<_> = cells.iter().filter(|x| x.2 >= c.lift_threshold).collect();
    let best = if feasible.is_empty() {
        cells
            .iter()
            .min_by(|x, y| y.2.total_cmp(&x.2).then(x.3.total_cmp(&y.3)))
            .unwrap()
    } else {
        *feasible
            .iter()
            .min_by(|x, y| y.4.partial_cmp(&x.4).unwrap().then(x.3.total_cmp(&y.3)))
            .unwrap()
    };
    (best.0, best.1, !feasible.is_empty())
}

#[test]
fn allocation_plans_cover_unsold_items_and_match_brute_force() {
    let env = Env::new(SMALL);
    env.simulate_and_train();
    env.ok(&[
        "allocate",
        "--model",
        "train/model",
        "--catalog",
        "sim/catalog.csv",
        "--logs",
        "sim/rct_round1.csv",
        "--out",
        "plan",
    ]);
    let rows = plans(&env.path("plan/plans.csv"));
    let r1 = read_outcomes_file(&env.path("sim/rct_round1.csv")).unwrap();
    assert_eq!(rows.len(), r1.iter().filter(|r| !r.sold).count());
    assert!(rows.windows(2).all(|w| w[0].item_id < w[1].item_id));

    let pair = PredictorPair::load(&env.path("train/model")).unwrap();
    let items = read_catalog_file(&env.path("sim/catalog.csv")).unwrap();
    let constraint = PolicyConstraint::new(0.02, None).unwrap();
    for row in rows.iter().take(100) {
        let mut item = items
            .iter()
            .find(|i| i.item_id == row.item_id)
            .unwrap()
            .clone();
        item.age_days += seqcoupon::domain::ROUND_GAP_HOURS / 24.0;
        let (j, k, feasible) = brute_force(&pair, &item, &constraint, 2.0);
        assert_eq!(
            row.round1_coupon,
            pair.round1_set.arms()[j],
            "{}",
            row.item_id
        );
        assert_eq!(
            row.round2_coupon,
            pair.round2_set.arms()[k],
            "{}",
            row.item_id
        );
        assert_eq!(row.feasible, feasible);
        assert_eq!(row.feasible, row.lift >= constraint.lift_threshold);
    }

    // Without history every catalog item is planned at its listed age.
    env.ok(&[
        "allocate",
        "--model",
        "train/model",
        "--catalog",
        "sim/catalog.csv",
        "--out",
        "plan0",
    ]);
    assert_eq!(plans(&env.path("plan0/plans.csv")).len(), items.len());
}

#[test]
fn saved_model_predicts_like_the_trained_one() {
    let env = Env::new(SMALL);
    env.simulate_and_train();
    let pair = PredictorPair::load(&env.path("train/model")).unwrap();
    let items = read_catalog_file(&env.path("sim/catalog.csv")).unwrap();
    let r1 = read_outcomes_file(&env.path("sim/rct_round1.csv")).unwrap();
    let r2 = read_outcomes_file(&env.path("sim/rct_round2.csv")).unwrap();
    let cfg = seqcoupon_cli::config::RunConfig::from_toml(SMALL).unwrap();
    let (set1, set2) = cfg.coupon_sets().unwrap();
    let fresh = seqcoupon::train_pair(&r1, &r2, &items, &set1, &set2, &cfg.training_options())
        .unwrap()
        .pair;
    for item in items.iter().take(300) {
        let a = predict_item(&pair, item, 2.0).unwrap();
        let b = predict_item(&fresh, item, 2.0).unwrap();
        for (x, y) in a.p1.iter().chain(&a.p2).zip(b.p1.iter().chain(&b.p2)) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
}

#[test]
fn all_unsold_log_gives_zero_curve() {
    let env = Env::new(SMALL);
    env.simulate_and_train();
    rewrite_log(
        &env.path("sim/rct_round1.csv"),
        |_| true,
        |l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f[6] = "false";
            f[7] = "";
            f[8] = "";
            f[9] = "";
            f.join(",")
        },
    );
    env.ok(&[
        "evaluate",
        "--data",
        "sim",
        "--model",
        "train/model",
        "--out",
        "eval",
    ]);
    let curve = lines(&env.path("eval/uplift_curve.csv"));
    assert_eq!(curve.len(), 11);
    for l in &curve[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(&f[1..], ["0", "0", "0"], "{l}");
    }
    let manifest = fs::read_to_string(env.path("eval/manifest.txt")).unwrap();
    assert!(manifest.contains("fact.lift_str = 0\n"), "{manifest}");
}

#[test]
fn compare_is_reproducible() {
    let env = Env::new(SMALL);
    env.ok(&["compare", "--out", "a"]);
    env.ok(&["compare", "--out", "b"]);
    let a = fs::read_to_string(env.path("a/comparison.txt")).unwrap();
    assert_eq!(a, fs::read_to_string(env.path("b/comparison.txt")).unwrap());
    assert!(a.starts_with("seeds = [7]\n"));
    assert_eq!(
        fs::read_to_string(env.path("a/manifest.txt")).unwrap(),
        fs::read_to_string(env.path("b/manifest.txt")).unwrap()
    );
}

#[test]
fn single_entry_grid_gives_one_row_per_round() {
    let env = Env::new(SMALL);
    env.simulate_and_train();
    let grid = lines(&env.path("train/grid.csv"));
    assert_eq!(grid.len(), 3);
    assert!(grid[1].starts_with("1,0,logistic,") && grid[1].ends_with(",true"));
    assert!(grid[2].starts_with("2,0,logistic,") && grid[2].ends_with(",true"));
}
