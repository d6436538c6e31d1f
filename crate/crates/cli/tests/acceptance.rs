//! Acceptance suite: runs every criterion through the experiment runner and
//! re-checks the stated tolerances against the written outputs. Prints one
//! line per criterion and exits non-zero if any fails.

// `ensure!` negates comparisons on purpose: a NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use gibbslab_cli::{run, RunOptions, RunResult, Status, MANIFEST_FILE};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn(&Path) -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Run {
    dir: PathBuf,
    result: RunResult,
}

impl Run {
    fn json(&self, name: &str) -> Result<Value, String> {
        let text = std::fs::read_to_string(self.dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
        serde_json::from_str(&text).map_err(|e| format!("{name}: {e}"))
    }

    fn csv(&self, name: &str) -> Result<Vec<Vec<String>>, String> {
        let text = std::fs::read_to_string(self.dir.join(name)).map_err(|e| format!("{name}: {e}"))?;
        Ok(text
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(str::to_owned).collect())
            .collect())
    }

    fn passed(&self) -> Result<(), String> {
        let m = &self.result.manifest;
        ensure!(
            m.status == Status::Pass,
            "run status {:?}: {:?} {:?}",
            m.status,
            m.error,
            m.assertions.iter().filter(|a| !a.passed).collect::<Vec<_>>()
        );
        Ok(())
    }
}

fn launch(root: &Path, tag: &str, config: Value) -> Run {
    let dir = root.join(tag);
    let opts = RunOptions {
        out: Some(dir.clone()),
        seed: None,
        workers: Some(1),
    };
    let result = run(&config, &opts);
    Run { dir, result }
}

fn num(v: &Value) -> f64 {
    match v {
        Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
        Value::String(s) => s.parse().unwrap_or(f64::NAN),
        _ => f64::NAN,
    }
}

fn col(rows: &[Vec<String>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect()
}

/// Slope and R² of an ordinary least-squares line.
fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    (slope, 1.0 - sse / syy)
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure!(
        elapsed.as_secs() < limit_s,
        "took {:.1}s, budget {limit_s}s",
        elapsed.as_secs_f64()
    );
    Ok(())
}

fn exact_conditional(root: &Path) -> Outcome {
    let r = launch(
        root,
        "c1",
        json!({"experiment": "conditional", "x": {"gamma": {"shape": 2.0, "scale": 1.0}}, "y": {"gamma": {"shape": 3.0, "scale": 1.0}}, "h": 1.0, "nodes": 2048}),
    );
    r.passed()?;
    let rows = r.csv("conditional.csv")?;
    ensure!(rows.len() == 2048, "{} grid points", rows.len());
    let (x, f) = (col(&rows, 0), col(&rows, 1));
    // Beta(2, 3) density.
    let err = x
        .iter()
        .zip(&f)
        .map(|(t, v)| (v - 12.0 * t * (1.0 - t).powi(2)).abs())
        .fold(0.0, f64::max);
    ensure!(err < 1e-6, "max pointwise error {err:e}");
    Ok(format!("max error {err:.2e} on 2048 points"))
}

fn limit_law_form(root: &Path) -> Outcome {
    let r = launch(
        root,
        "c2",
        json!({"experiment": "limit-law", "x": {"gamma": {"shape": 2.0, "scale": 1.0}}, "y": {"gamma": {"shape": 5.0, "scale": 1.0}}, "h": 2.0}),
    );
    r.passed()?;
    let rows: Vec<Vec<String>> = r
        .csv("limit_law.csv")?
        .into_iter()
        .filter(|row| row[3].parse::<f64>().is_ok_and(f64::is_finite))
        .collect();
    let (slope, r2) = least_squares(&col(&rows, 0), &col(&rows, 3));
    // d ln f_Y/dy for Gamma(5, 1) at y = 2.
    let analytic = 4.0 / 2.0 - 1.0;
    let psi = num(&r.json("summary.json")?["psi"]);
    ensure!(r2 > 1.0 - 1e-10, "R^2 = {r2}");
    ensure!((psi - analytic).abs() < 1e-6, "psi {psi} vs {analytic}");
    ensure!((slope + psi).abs() < 1e-6, "slope {slope} vs -psi {}", -psi);
    Ok(format!("R^2 = 1 - {:.1e}, psi = {psi:.12}", 1.0 - r2))
}

fn kl_convergence(root: &Path) -> Outcome {
    let start = Instant::now();
    let r = launch(
        root,
        "c3",
        json!({"experiment": "convergence", "n": [10, 30, 100, 300, 1000], "h": 4.0, "x": {"exponential": {"rate": 1.0}}, "y": {"gamma": {"shape": 5.0, "scale": 1.0}}, "seed": 7}),
    );
    within(start.elapsed(), 120)?;
    r.passed()?;
    let rows = r.csv("convergence.csv")?;
    let (n, kl) = (col(&rows, 0), col(&rows, 1));
    ensure!(kl.windows(2).all(|w| w[1] < w[0]), "not strictly decreasing: {kl:?}");
    let ln_n: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let ln_kl: Vec<f64> = kl.iter().map(|v| v.ln()).collect();
    let (slope, _) = least_squares(&ln_n, &ln_kl);
    ensure!(slope <= -2.0 / 3.0 + 0.2, "slope {slope}");
    Ok(format!("slope {slope:.3}, {:.1}s", start.elapsed().as_secs_f64()))
}

fn energy_shell(root: &Path) -> Outcome {
    let r = launch(
        root,
        "c4",
        json!({"experiment": "shell", "potential": "harmonic", "n1": 2, "n2": 200, "h": 100.0, "delta": 1.0, "count": 100000, "sampler": "direct_sphere", "trend_n2": [20, 50, 200], "trend_count": 100000}),
    );
    r.passed()?;
    let s = r.json("summary.json")?;
    let ks = num(&s["summary"]["ks"]);
    ensure!(ks < 0.02, "KS = {ks}");
    let trend: Vec<f64> = s["trend"]
        .as_array()
        .ok_or("no trend")?
        .iter()
        .map(|t| num(&t["ks"]))
        .collect();
    ensure!(trend.len() == 3, "trend has {} points", trend.len());
    // Two standard deviations of a difference of independent KS statistics.
    let band = 2.0 * 0.2603 * (2.0 / 1e5f64).sqrt();
    ensure!(trend.windows(2).all(|w| w[1] < w[0] + band), "trend {trend:?}");
    Ok(format!("KS {ks:.4}; trend {trend:.4?}"))
}

fn tilted_pmf(root: &Path) -> Outcome {
    let r = launch(
        root,
        "c5",
        json!({"experiment": "counting", "k_lambda": 2.0, "bath": {"kind": "poisson", "lambda": 3.0}, "n": 1000}),
    );
    r.passed()?;
    let s = r.json("summary.json")?;
    let m = s["m"].as_u64().ok_or("no m")?;
    ensure!(m == 3002, "conditioned on {m}, mean total is 3002");
    let (tv, prior) = (num(&s["tv_exact_to_tilted"]), num(&s["prior_max_abs_error"]));
    ensure!(tv < 1e-2, "TV = {tv}");
    ensure!(prior < 1e-12, "prior error {prior:e}");
    Ok(format!("TV {tv:.2e}, 1/k! prior error {prior:.1e}"))
}

fn gibbs_paradox(root: &Path) -> Outcome {
    let case = |b: f64, n: u64| json!({"b_volume": b, "d_volume": 1.0, "particles": n});
    let r = launch(
        root,
        "c6",
        json!({"experiment": "gibbs-paradox", "cases": [case(0.5, 1), case(0.5, 4)]}),
    );
    r.passed()?;
    let s = r.json("summary.json")?;
    let probs = |i: usize, law: &str| -> Vec<f64> {
        s[i]["report"][law]["probs"]
            .as_array()
            .map(|a| a.iter().map(num).collect())
            .unwrap_or_default()
    };
    let kl1 = num(&s[0]["report"]["kl"]);
    ensure!(kl1.abs() <= 1e-12, "N=1 KL = {kl1:e}");
    let (a, b) = (probs(0, "law_i"), probs(0, "law_ii"));
    ensure!(
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-12),
        "N=1 laws {a:?} vs {b:?}"
    );
    let configs = s[1]["report"]["parameters"]["configurations"].as_u64();
    ensure!(configs == Some(16), "{configs:?} configurations");
    let binom = [1.0, 4.0, 6.0, 4.0, 1.0].map(|c| c / 16.0);
    let law = probs(1, "law_ii");
    ensure!(
        law.len() == 5 && law.iter().zip(&binom).all(|(x, y)| (x - y).abs() <= 1e-12),
        "N=4 law {law:?}"
    );
    Ok(format!(
        "N=1 KL {kl1:.1e}; N=4 matches Binomial(4, 1/2) over 16 configurations"
    ))
}

fn legendre(root: &Path) -> Outcome {
    let r = launch(
        root,
        "c7",
        json!({"experiment": "legendre", "entropy": {"kind": "log_energy", "c": 1.5}, "beta": 1.0, "volumes": [100.0, 1000.0, 10000.0]}),
    );
    r.passed()?;
    let rows = r.csv("legendre_sweep.csv")?;
    let (v, fe, fl, gpv) = (col(&rows, 0), col(&rows, 1), col(&rows, 2), col(&rows, 4));
    let i = v.iter().position(|&x| x == 1000.0).ok_or("no V = 1000 row")?;
    let gap = (fe[i] - fl[i]).abs() / v[i];
    ensure!(gap < 0.01, "gap/V = {gap}");
    ensure!(gpv.windows(2).all(|w| w[1] < w[0]), "gap/V {gpv:?}");
    Ok(format!("gap/V at 1e3 = {gap:.2e}; sweep {gpv:.3?}"))
}

fn fluctuation(root: &Path) -> Outcome {
    let e = launch(
        root,
        "c8e",
        json!({"experiment": "fluctuation", "family": "exponential", "lambda": 1.0, "seed": 42}),
    );
    e.passed()?;
    let rep = &e.json("summary.json")?[0]["report"];
    let (lhs, rhs, prod) = (num(&rep["lhs"]), num(&rep["rhs"]), num(&rep["second_product"]));
    ensure!(lhs.abs() <= 1e-12 && rhs.abs() <= 1e-12, "lhs {lhs:e} rhs {rhs:e}");
    ensure!((prod - 2.0).abs() < 1e-9, "E[Y^2]E[beta^2] = {prod}");
    let g = launch(
        root,
        "c8g",
        json!({"experiment": "fluctuation", "family": "gamma-grid"}),
    );
    g.passed()?;
    let cells = g.json("summary.json")?;
    let cells = cells.as_array().ok_or("no grid")?;
    ensure!(cells.len() == 9, "{} cells", cells.len());
    let mut worst = f64::INFINITY;
    for c in cells {
        let margin = num(&c["report"]["lhs"]) - num(&c["report"]["rhs"]);
        ensure!(margin >= -1e-9, "{}: margin {margin}", c["case"]);
        worst = worst.min(margin);
    }
    Ok(format!(
        "exponential lhs {lhs:.1e} rhs {rhs:.1e}, product {prod:.9}; grid min margin {worst:.3}"
    ))
}

fn kl_bound(root: &Path) -> Outcome {
    let r = launch(root, "c9", json!({"experiment": "kl-bound", "pairs": 50}));
    r.passed()?;
    let rows = r.csv("kl_bound.csv")?;
    ensure!(rows.len() == 50, "{} pairs", rows.len());
    // Labels contain no commas, so the last three columns are lhs, rhs, slack.
    for row in &rows {
        let k = row.len();
        let (lhs, rhs): (f64, f64) = (
            row[k - 3].parse().unwrap_or(f64::NAN),
            row[k - 2].parse().unwrap_or(f64::NAN),
        );
        ensure!(lhs >= rhs - 1e-9, "pair {}: {lhs} < {rhs}", row[0]);
    }
    let eq = num(&r.json("summary.json")?["equality_case"]["slack"]);
    ensure!(eq.abs() < 1e-8, "equality slack {eq:e}");
    Ok(format!("50 pairs hold; equality slack {eq:.1e}"))
}

fn exchange(root: &Path) -> Outcome {
    let start = Instant::now();
    let r = launch(
        root,
        "c10",
        json!({"experiment": "exchange", "agents": 10000, "total": 10000.0, "delta_fraction": 0.01, "snapshots": 100000}),
    );
    within(start.elapsed(), 300)?;
    r.passed()?;
    let s = r.json("comparison.json")?;
    let mut parts = Vec::new();
    for c in s["per_city"].as_array().ok_or("no cities")? {
        let (tv, z) = (num(&c["comparison"]["tv"]), num(&c["z"]));
        ensure!(tv < 0.02, "city {}: TV {tv}", c["city"]);
        ensure!(z < 3.0, "city {}: z {z}", c["city"]);
        parts.push(format!("TV {tv:.4} z {z:.2}"));
    }
    let cities = s["cities"].as_array().ok_or("no city comparison")?;
    let z = num(&cities[0]["z"]);
    ensure!(cities[0]["mode"] == "a" && z < 2.0, "cities z {z}");
    Ok(format!(
        "{}; cities z {z:.2}; {:.0}s",
        parts.join(", "),
        start.elapsed().as_secs_f64()
    ))
}

fn counterexample(root: &Path) -> Outcome {
    let r = launch(
        root,
        "c11",
        json!({"experiment": "limit-law", "counterexample_n": 1000, "counterexample_gammas": [0.0, 1.0]}),
    );
    r.passed()?;
    let s = r.json("summary.json")?;
    for c in s["counterexamples"].as_array().ok_or("none")? {
        let (mass, mean_c, mean) = (num(&c["mass_constraint"]), num(&c["mean_constraint"]), num(&c["mean"]));
        ensure!(
            (mass - 1.0).abs() < 1e-8 && (mean_c - 1.0).abs() < 1e-8,
            "gamma {}: {mass} {mean_c}",
            c["gamma"]
        );
        ensure!((mean - 1e-3).abs() < 1e-8, "gamma {}: E[X] = {mean}", c["gamma"]);
    }
    let kl = num(&s["counterexample_kl"]);
    ensure!(kl > 0.1, "KL = {kl}");
    Ok(format!("constraints hold for gamma in {{0, 1}}; KL {kl:.4}"))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).into_iter().flatten().flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if name != MANIFEST_FILE {
            files.insert(name, std::fs::read(entry.path()).unwrap_or_default());
        }
    }
    files
}

fn determinism(root: &Path) -> Outcome {
    let case = |b: f64, n: u64| json!({"b_volume": b, "d_volume": 1.0, "particles": n});
    let configs = [
        json!({"experiment": "conditional", "delta": 0.05}),
        json!({"experiment": "limit-law"}),
        json!({"experiment": "convergence", "n": [10, 30, 100, 1000]}),
        json!({"experiment": "counting", "n": 200}),
        json!({"experiment": "gibbs-paradox", "cases": [case(0.5, 4), case(0.1, 30)], "samples": 2000}),
        json!({"experiment": "colonies", "t_max": 500.0, "replicas": 2}),
        json!({"experiment": "shell", "count": 5000, "trend_n2": [], "write_samples": true}),
        json!({"experiment": "shell", "potential": "quartic", "n1": 1, "n2": 40, "h": 20.0, "delta": 0.1, "count": 2000, "trend_n2": [], "dos_samples": 20000}),
        json!({"experiment": "legendre"}),
        json!({"experiment": "fluctuation", "family": "gamma-grid"}),
        json!({"experiment": "kl-bound"}),
        json!({"experiment": "exchange", "agents": 1000, "total": 1000.0, "snapshots": 2000}),
    ];
    let mut checked = 0;
    for (i, cfg) in configs.iter().enumerate() {
        let mut cfg = cfg.clone();
        cfg["seed"] = json!(11 + i as u64);
        let a = launch(root, &format!("d{i}a"), cfg.clone());
        let b = launch(root, &format!("d{i}b"), cfg.clone());
        ensure!(
            a.result.manifest.error.is_none(),
            "{}: {:?}",
            cfg["experiment"],
            a.result.manifest.error
        );
        let (sa, sb) = (snapshot(&a.dir), snapshot(&b.dir));
        ensure!(!sa.is_empty(), "{}: no outputs", cfg["experiment"]);
        ensure!(sa == sb, "{}: outputs differ", cfg["experiment"]);
        checked += sa.len();
        if cfg["experiment"] == "exchange" {
            let c = launch(
                root,
                "d-cmp",
                json!({"experiment": "compare-ab", "a": a.dir.join("histograms_a.json"), "b": b.dir.join("histograms_b.json"), "city": 1}),
            );
            let d = launch(
                root,
                "d-cmp2",
                json!({"experiment": "compare-ab", "a": a.dir.join("histograms_a.json"), "b": b.dir.join("histograms_b.json"), "city": 1}),
            );
            ensure!(
                c.result.manifest.error.is_none(),
                "compare-ab: {:?}",
                c.result.manifest.error
            );
            ensure!(snapshot(&c.dir) == snapshot(&d.dir), "compare-ab outputs differ");
            checked += 1;
        }
    }
    Ok(format!("{checked} output files byte-identical across 13 paired runs"))
}

fn main() {
    let root = tempfile::tempdir().expect("temporary directory");
    let criteria: [Criterion; 12] = [
        ("exact-conditional oracle", exact_conditional),
        ("limit-law form", limit_law_form),
        ("KL convergence", kl_convergence),
        ("energy shell", energy_shell),
        ("tilted pmf", tilted_pmf),
        ("Gibbs paradox", gibbs_paradox),
        ("Legendre transform", legendre),
        ("fluctuation bounds", fluctuation),
        ("KL bound", kl_bound),
        ("exchange equivalence", exchange),
        ("counterexample", counterexample),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check(root.path()) {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
