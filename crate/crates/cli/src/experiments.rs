//! The twelve experiments. Each has a parameter block with defaults, parsed
//! strictly (unknown keys are configuration errors), and a driver that
//! writes its outputs and records its checks on the [`Context`].

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use statrs::function::beta::ln_beta;

use gibbslab::conditional::{exact_conditional_continuous_with, shell_conditional_with, JointLaw};
use gibbslab::counting::colony::{colony_simulation, ColonyModel, ColonyRun};
use gibbslab::counting::spatial::{gibbs_paradox_demo, spatial_poisson_counts, RegionPair, MAX_ENUMERATED};
use gibbslab::counting::{asymptotic_conditional_pmf, inverse_factorial_prior, mu_n, BaseCount, CountingPair};
use gibbslab::density::{ln_binomial, total_variation, AnalyticFamily, Density1D, DiscretePmf};
use gibbslab::exchange::{compare_ab, run_exchange, ExchangeEconomy, ExchangeMode, ExchangeRun, SubsystemHistogram};
use gibbslab::limit_law::{
    asymptotic_law, construct_counterexample, convergence_study, counterexample_kl, kl_on_grid, SmallSystemSequence,
};
use gibbslab::phase_space::{
    bath_dos, bath_psi, empirical_subsystem_cdf, ks_to_canonical, sample_energy_shell, CanonicalPrediction, Potential,
    Sampler, SeparableHamiltonian, ShellRequest, ShellSummary,
};
use gibbslab::stats::ols;
use gibbslab::thermo::{
    fluctuation_bounds, free_energy_legendre, gap_per_volume_decreasing, kl_lower_bound_check, sweep_to_csv,
    volume_sweep, EntropyDensity, ExtensiveEntropy,
};
use gibbslab::CounterRng;

use crate::{Context, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Conditional,
    LimitLaw,
    Convergence,
    Counting,
    GibbsParadox,
    Colonies,
    Shell,
    Legendre,
    Fluctuation,
    KlBound,
    Exchange,
    CompareAb,
}

impl Experiment {
    pub const ALL: [Experiment; 12] = [
        Experiment::Conditional,
        Experiment::LimitLaw,
        Experiment::Convergence,
        Experiment::Counting,
        Experiment::GibbsParadox,
        Experiment::Colonies,
        Experiment::Shell,
        Experiment::Legendre,
        Experiment::Fluctuation,
        Experiment::KlBound,
        Experiment::Exchange,
        Experiment::CompareAb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Conditional => "conditional",
            Experiment::LimitLaw => "limit-law",
            Experiment::Convergence => "convergence",
            Experiment::Counting => "counting",
            Experiment::GibbsParadox => "gibbs-paradox",
            Experiment::Colonies => "colonies",
            Experiment::Shell => "shell",
            Experiment::Legendre => "legendre",
            Experiment::Fluctuation => "fluctuation",
            Experiment::KlBound => "kl-bound",
            Experiment::Exchange => "exchange",
            Experiment::CompareAb => "compare-ab",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }

    /// The result of the theory the experiment exercises.
    pub fn anchor(self) -> &'static str {
        match self {
            Experiment::Conditional => "exact conditional law of one summand given the sum",
            Experiment::LimitLaw => "continuous limit theorem: conditional law tends to f_X e^{-psi x}/Z",
            Experiment::Convergence => "rate of KL(exact || limit) as the small system shrinks",
            Experiment::Counting => "discrete limit theorem: tilted prior p_K(k) e^{mu k}/Q",
            Experiment::GibbsParadox => "1/k! prior and labelled versus unlabelled counting",
            Experiment::Colonies => "discrete limit law in two colonies with migration",
            Experiment::Shell => "canonical form from a microcanonical energy shell",
            Experiment::Legendre => "free energy as the Legendre transform of the entropy",
            Experiment::Fluctuation => "variance bounds on the fluctuating inverse temperature",
            Experiment::KlBound => "KL lower bound -ln(integral of g) for a non-normalized g",
            Experiment::Exchange => "conserved versus selected totals in a kinetic exchange economy",
            Experiment::CompareAb => "divergence between conserved-total and selected-total histograms",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Experiment::Conditional => {
                "tabulate f_{X|H} for an independent pair and compare with a closed form when one exists"
            }
            Experiment::LimitLaw => {
                "build the asymptotic law, check its log-linear ratio to f_X, and solve the counterexample family"
            }
            Experiment::Convergence => {
                "KL between exact and asymptotic conditionals along X/n, with a log-log slope fit"
            }
            Experiment::Counting => {
                "exact enumerated conditional of a count versus the tilted prior, and the 1/k! prior check"
            }
            Experiment::GibbsParadox => "conditional count laws for unlabelled and labelled particles in a subregion",
            Experiment::Colonies => {
                "exact-jump simulation of two colonies; conditional law of the small one given the total"
            }
            Experiment::Shell => "uniform samples on an energy shell; KS distance of U_1 to the canonical prediction",
            Experiment::Legendre => "exact and Legendre free energies over a sweep of system sizes",
            Experiment::Fluctuation => {
                "variance products var[Y] var[beta(Y)] and E[Y^2] E[beta^2] against their lower bounds"
            }
            Experiment::KlBound => "randomized pairs (f, g) checking the bound and its slack identity",
            Experiment::Exchange => {
                "paired runs with conserved and selected totals; per-city histograms and fitted beta"
            }
            Experiment::CompareAb => {
                "compare two saved city histograms: total variation, symmetrized KL and beta difference"
            }
        }
    }

    pub fn default_parameters(self) -> Value {
        fn value<P: Default + Serialize>() -> Value {
            serde_json::to_value(P::default()).expect("parameters serialize")
        }
        match self {
            Experiment::Conditional => value::<ConditionalParams>(),
            Experiment::LimitLaw => value::<LimitLawParams>(),
            Experiment::Convergence => value::<ConvergenceParams>(),
            Experiment::Counting => value::<CountingParams>(),
            Experiment::GibbsParadox => value::<GibbsParams>(),
            Experiment::Colonies => value::<ColonyParams>(),
            Experiment::Shell => value::<ShellParams>(),
            Experiment::Legendre => value::<LegendreParams>(),
            Experiment::Fluctuation => value::<FluctuationParams>(),
            Experiment::KlBound => value::<KlBoundParams>(),
            Experiment::Exchange => value::<ExchangeParams>(),
            Experiment::CompareAb => value::<CompareParams>(),
        }
    }

    pub(crate) fn run(self, rest: Map<String, Value>, ctx: &mut Context) -> Result<(), RunError> {
        match self {
            Experiment::Conditional => conditional(&parse(rest, ctx)?, ctx),
            Experiment::LimitLaw => limit_law(&parse(rest, ctx)?, ctx),
            Experiment::Convergence => convergence(&parse(rest, ctx)?, ctx),
            Experiment::Counting => counting(&parse(rest, ctx)?, ctx),
            Experiment::GibbsParadox => gibbs(&parse(rest, ctx)?, ctx),
            Experiment::Colonies => colonies(&parse(rest, ctx)?, ctx),
            Experiment::Shell => shell(&parse(rest, ctx)?, ctx),
            Experiment::Legendre => legendre(&parse(rest, ctx)?, ctx),
            Experiment::Fluctuation => fluctuation(&parse(rest, ctx)?, ctx),
            Experiment::KlBound => kl_bound(&parse(rest, ctx)?, ctx),
            Experiment::Exchange => exchange(&parse(rest, ctx)?, ctx),
            Experiment::CompareAb => compare(&parse(rest, ctx)?, ctx),
        }
    }
}

/// Deserialize the experiment's parameters and record them, defaults
/// included, as the resolved configuration.
fn parse<P: DeserializeOwned + Serialize>(rest: Map<String, Value>, ctx: &mut Context) -> Result<P, RunError> {
    let p: P = serde_json::from_value(Value::Object(rest)).map_err(|e| RunError::Config(e.to_string()))?;
    ctx.resolved = Some(serde_json::to_value(&p).map_err(|e| RunError::Config(e.to_string()))?);
    Ok(p)
}

fn family(f: AnalyticFamily) -> Result<Density1D, RunError> {
    Ok(Density1D::family(f)?)
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------- conditional

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionalParams {
    pub x: AnalyticFamily,
    pub y: AnalyticFamily,
    pub h: f64,
    pub nodes: usize,
    /// Also tabulate the shell conditional of this width.
    pub delta: Option<f64>,
    /// Largest pointwise error allowed against a closed form.
    pub tolerance: f64,
}

impl Default for ConditionalParams {
    fn default() -> Self {
        Self {
            x: AnalyticFamily::Gamma { shape: 2.0, scale: 1.0 },
            y: AnalyticFamily::Gamma { shape: 3.0, scale: 1.0 },
            h: 1.0,
            nodes: 2048,
            delta: None,
            tolerance: 1e-6,
        }
    }
}

/// Gamma summands with a common scale condition to a scaled Beta law.
fn beta_oracle(x: AnalyticFamily, y: AnalyticFamily, h: f64) -> Option<impl Fn(f64) -> f64> {
    match (x, y) {
        (AnalyticFamily::Gamma { shape: a, scale: s1 }, AnalyticFamily::Gamma { shape: b, scale: s2 }) if s1 == s2 => {
            let ln_b = ln_beta(a, b);
            Some(move |v: f64| {
                let t = v / h;
                if t <= 0.0 || t >= 1.0 {
                    let edge = if t <= 0.0 { a } else { b };
                    return if edge == 1.0 { 1.0 / (h * ln_b.exp()) } else { 0.0 };
                }
                ((a - 1.0) * t.ln() + (b - 1.0) * (-t).ln_1p() - ln_b).exp() / h
            })
        }
        _ => None,
    }
}

fn conditional(p: &ConditionalParams, ctx: &mut Context) -> Result<(), RunError> {
    let joint = JointLaw::independent(family(p.x)?, family(p.y)?);
    let law = exact_conditional_continuous_with(&joint, p.h, p.nodes)?;
    let nodes = law.nodes();
    let oracle = beta_oracle(p.x, p.y, p.h);

    let mut csv = String::from(if oracle.is_some() { "x,pdf,oracle\n" } else { "x,pdf\n" });
    let mut max_err: Option<f64> = None;
    for &x in &nodes {
        let v = law.pdf(x);
        match &oracle {
            Some(o) => {
                let w = o(x);
                max_err = Some(max_err.unwrap_or(0.0).max((v - w).abs()));
                csv.push_str(&format!("{},{},{}\n", fmt(x), fmt(v), fmt(w)));
            }
            None => csv.push_str(&format!("{},{}\n", fmt(x), fmt(v))),
        }
    }
    ctx.outputs.text("conditional.csv", &csv)?;

    let shell_tv = match p.delta {
        Some(d) => {
            let s = shell_conditional_with(&joint, p.h, d, p.nodes)?;
            Some(total_variation(s.density(), law.density())?)
        }
        None => None,
    };
    let mass = law.mass()?;
    let summary = json!({
        "h": p.h,
        "nodes": nodes.len(),
        "mass": mass,
        "mean": law.mean()?,
        "max_error_vs_oracle": max_err,
        "shell_tv_to_exact": shell_tv,
    });
    ctx.outputs.json("summary.json", &summary)?;
    if let Some(e) = max_err {
        ctx.check(
            "pointwise error against the Beta oracle",
            e < p.tolerance,
            format!("max error {e:e}"),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- limit law

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitLawParams {
    pub x: AnalyticFamily,
    pub y: AnalyticFamily,
    pub h: f64,
    pub psi_tolerance: f64,
    pub r_squared_floor: f64,
    /// System-size index of the counterexample family; `null` skips it.
    pub counterexample_n: Option<u64>,
    pub counterexample_gammas: Vec<f64>,
    pub constraint_tolerance: f64,
    pub counterexample_kl_floor: f64,
}

impl Default for LimitLawParams {
    fn default() -> Self {
        Self {
            x: AnalyticFamily::Gamma { shape: 2.0, scale: 1.0 },
            y: AnalyticFamily::Gamma { shape: 5.0, scale: 1.0 },
            // Away from the bath mode (y = 4), so the tilt is not zero.
            h: 2.0,
            psi_tolerance: 1e-6,
            r_squared_floor: 1.0 - 1e-10,
            counterexample_n: Some(1000),
            counterexample_gammas: vec![0.0, 1.0],
            constraint_tolerance: 1e-8,
            counterexample_kl_floor: 0.1,
        }
    }
}

/// `d ln f / dy` in closed form for the exponential and gamma families, by
/// Richardson-extrapolated central differences otherwise.
fn bath_log_slope(family: AnalyticFamily, f: &Density1D, y: f64) -> f64 {
    match family {
        AnalyticFamily::Exponential { rate } => return -rate,
        AnalyticFamily::Gamma { shape, scale } => return (shape - 1.0) / y - 1.0 / scale,
        _ => {}
    }
    let d = |s: f64| (f.ln_pdf(y + s) - f.ln_pdf(y - s)) / (2.0 * s);
    let s = 1e-3 * y.abs().max(1e-3);
    (4.0 * d(0.5 * s) - d(s)) / 3.0
}

fn limit_law(p: &LimitLawParams, ctx: &mut Context) -> Result<(), RunError> {
    let fx = family(p.x)?;
    let fy = family(p.y)?;
    let joint = JointLaw::independent(fx.clone(), fy.clone());
    let asym = asymptotic_law(&fx, &joint, p.h)?;
    let exact = exact_conditional_continuous_with(&joint, p.h, gibbslab::conditional::DEFAULT_NODES)?;
    let analytic = bath_log_slope(p.y, &fy, p.h);

    let mut csv = String::from("x,exact_pdf,asymptotic_pdf,ln_ratio\n");
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for x in asym.law.nodes() {
        let lf = fx.ln_pdf(x);
        let la = asym.ln_pdf_exact(&fx, x);
        let ratio = la - lf;
        if lf.is_finite() {
            xs.push(x);
            ys.push(ratio);
        }
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt(x),
            fmt(exact.pdf(x)),
            fmt(la.exp()),
            fmt(ratio)
        ));
    }
    ctx.outputs.text("limit_law.csv", &csv)?;
    let fit = ols(&xs, &ys)?;
    let kl = kl_on_grid(&exact, |x| asym.ln_pdf_exact(&fx, x))?;

    let mut counter = Vec::new();
    if let Some(n) = p.counterexample_n {
        for &g in &p.counterexample_gammas {
            counter.push(construct_counterexample(Some(g), None, n)?);
        }
    }
    let counter_kl = if counter.len() >= 2 {
        Some(counterexample_kl(&counter[0], &counter[1])?)
    } else {
        None
    };

    ctx.outputs.json(
        "summary.json",
        &json!({
            "h": p.h,
            "psi": asym.psi,
            "psi_numeric": analytic,
            "ln_z": asym.ln_z,
            "ratio_slope": fit.slope,
            "ratio_r_squared": fit.r_squared,
            "kl_exact_to_asymptotic": kl,
            "counterexamples": counter,
            "counterexample_kl": counter_kl,
        }),
    )?;
    ctx.check(
        "ln ratio to f_X is linear",
        fit.r_squared > p.r_squared_floor,
        format!("R^2 = {}", fit.r_squared),
    );
    ctx.check(
        "ratio slope equals -psi",
        (fit.slope + asym.psi).abs() < p.psi_tolerance,
        format!("slope {} vs psi {}", fit.slope, asym.psi),
    );
    ctx.check(
        "psi equals the bath log-slope",
        (asym.psi - analytic).abs() < p.psi_tolerance,
        format!("psi {} vs bath log-slope {}", asym.psi, analytic),
    );
    for c in &counter {
        let nf = c.n as f64;
        ctx.check(
            format!("counterexample gamma={} constraints", c.gamma),
            (c.mass_constraint - 1.0).abs() < p.constraint_tolerance
                && (c.mean_constraint - 1.0).abs() < p.constraint_tolerance,
            format!("mass {} mean {}", c.mass_constraint, c.mean_constraint),
        );
        ctx.check(
            format!("counterexample gamma={} mean is 1/n", c.gamma),
            (c.mean - 1.0 / nf).abs() < p.constraint_tolerance,
            format!("E[X] = {}", c.mean),
        );
    }
    if let Some(k) = counter_kl {
        ctx.check(
            "counterexample densities differ",
            k > p.counterexample_kl_floor,
            format!("KL = {k}"),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- convergence

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceParams {
    pub n: Vec<u64>,
    pub h: f64,
    pub x: AnalyticFamily,
    pub y: AnalyticFamily,
    pub slope_bound: f64,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        Self {
            n: vec![10, 30, 100, 300, 1000],
            h: 4.0,
            x: AnalyticFamily::Exponential { rate: 1.0 },
            y: AnalyticFamily::Gamma { shape: 5.0, scale: 1.0 },
            slope_bound: -2.0 / 3.0 + 0.2,
        }
    }
}

fn convergence(p: &ConvergenceParams, ctx: &mut Context) -> Result<(), RunError> {
    let base = JointLaw::independent(family(p.x)?, family(p.y)?);
    let seq = SmallSystemSequence::divide_by_n(base, p.n.clone())?;
    let report = convergence_study(&seq, p.h)?;
    ctx.outputs.text("convergence.csv", &report.to_csv())?;
    let summary = report.summary();
    ctx.outputs.json(
        "summary.json",
        &json!({ "h": p.h, "fit": summary, "rows": report.rows }),
    )?;
    ctx.check(
        "KL strictly decreasing in n",
        summary.strictly_decreasing,
        format!("{:?}", report.rows.iter().map(|r| r.kl).collect::<Vec<_>>()),
    );
    ctx.check(
        "log-log slope within bound",
        summary.slope <= p.slope_bound,
        format!("slope {} <= {}", summary.slope, p.slope_bound),
    );
    Ok(())
}

// ---------------------------------------------------------------- counting

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountingParams {
    pub k_lambda: f64,
    pub k_max: usize,
    pub bath: BaseCount,
    pub n: u64,
    /// Total to condition on; defaults to the rounded mean total.
    pub m: Option<u64>,
    pub tv_bound: f64,
    pub prior_lambda: f64,
    pub prior_max_k: usize,
    pub prior_tolerance: f64,
}

impl Default for CountingParams {
    fn default() -> Self {
        Self {
            k_lambda: 2.0,
            k_max: 60,
            bath: BaseCount::Poisson { lambda: 3.0 },
            n: 1000,
            m: None,
            tv_bound: 1e-2,
            prior_lambda: 2.0,
            prior_max_k: 40,
            prior_tolerance: 1e-12,
        }
    }
}

fn counting(p: &CountingParams, ctx: &mut Context) -> Result<(), RunError> {
    let pk = DiscretePmf::poisson(p.k_lambda, p.k_max)?;
    let pair = CountingPair::independent(pk.clone(), p.bath.clone())?;
    let m =
        p.m.unwrap_or_else(|| (pk.mean() + p.n as f64 * p.bath.mean()).round() as u64);
    let exact = pair.exact_conditional(p.n, m)?.pmf;
    let mu = mu_n(&pair, p.n, m)?;
    let tilted = asymptotic_conditional_pmf(&pk, mu.value, m)?;
    let tv = exact.total_variation(&tilted);

    let prior = inverse_factorial_prior(p.prior_max_k);
    let tilted_prior = asymptotic_conditional_pmf(&prior, p.prior_lambda.ln(), p.prior_max_k as u64)?;
    let poisson = DiscretePmf::poisson(p.prior_lambda, p.prior_max_k)?;
    let prior_err = (0..=p.prior_max_k)
        .map(|k| (tilted_prior.pmf(k) - poisson.pmf(k)).abs())
        .fold(0.0, f64::max);

    let mut csv = String::from("k,exact,tilted\n");
    for k in 0..=exact.max_k().max(tilted.max_k()).min(p.k_max) {
        csv.push_str(&format!("{k},{},{}\n", fmt(exact.pmf(k)), fmt(tilted.pmf(k))));
    }
    ctx.outputs.text("counting.csv", &csv)?;
    ctx.outputs.json(
        "summary.json",
        &json!({
            "n": p.n,
            "m": m,
            "mu": mu,
            "tv_exact_to_tilted": tv,
            "prior_max_abs_error": prior_err,
        }),
    )?;
    ctx.check(
        "tilted pmf close to exact conditional",
        tv < p.tv_bound,
        format!("TV = {tv:e}"),
    );
    ctx.check(
        "1/k! prior tilted by ln(lambda) is a truncated Poisson",
        prior_err < p.prior_tolerance,
        format!("max abs error {prior_err:e}"),
    );
    Ok(())
}

// ---------------------------------------------------------------- gibbs paradox

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsParams {
    pub cases: Vec<RegionPair>,
    /// Random placements per case for the spatial count check; zero skips it.
    pub samples: u64,
    pub tolerance: f64,
}

impl Default for GibbsParams {
    fn default() -> Self {
        let case = |b, n| RegionPair {
            b_volume: b,
            d_volume: 1.0,
            particles: n,
        };
        Self {
            cases: vec![case(0.5, 1), case(0.5, 4), case(0.01, 100)],
            samples: 10_000,
            tolerance: 1e-12,
        }
    }
}

fn gibbs(p: &GibbsParams, ctx: &mut Context) -> Result<(), RunError> {
    let mut csv = String::from("case,k,law_i,law_ii\n");
    let mut reports = Vec::new();
    for (i, case) in p.cases.iter().enumerate() {
        let rep = gibbs_paradox_demo(case, Some(ctx.seed))?;
        let n = case.particles;
        for k in 0..=n as usize {
            csv.push_str(&format!(
                "{i},{k},{},{}\n",
                fmt(rep.law_i.pmf(k)),
                fmt(rep.law_ii.pmf(k))
            ));
        }
        let label = format!("case {i} (N={n}, ratio {})", case.ratio());
        ctx.check(
            format!("{label}: KL >= 0"),
            rep.kl >= -p.tolerance,
            format!("KL = {:e}", rep.kl),
        );
        if n == 1 {
            let diff = rep.law_i.total_variation(&rep.law_ii);
            ctx.check(
                format!("{label}: laws coincide"),
                rep.kl.abs() <= p.tolerance && diff <= p.tolerance,
                format!("KL = {:e}, TV = {diff:e}", rep.kl),
            );
        } else if case.ratio() < 1.0 {
            ctx.check(
                format!("{label}: laws differ"),
                rep.kl > 0.0,
                format!("KL = {:e}", rep.kl),
            );
        }
        if n <= MAX_ENUMERATED {
            let r = case.ratio();
            let err = (0..=n)
                .map(|k| (rep.law_ii.pmf(k as usize) - ln_binomial(n, k, r).exp()).abs())
                .fold(0.0, f64::max);
            ctx.check(
                format!("{label}: enumeration of 2^N configurations is Binomial"),
                rep.parameters.configurations == 1u64 << n && err <= p.tolerance,
                format!("{} configurations, max error {err:e}", rep.parameters.configurations),
            );
        }
        let spatial = if p.samples > 0 {
            let s = spatial_poisson_counts(case, p.samples, ctx.seed.wrapping_add(i as u64))?;
            let r = case.ratio();
            let expected = n as f64 * r;
            let sigma = (n as f64 * r * (1.0 - r)).sqrt();
            let bound = 3.0 * sigma / (p.samples as f64).sqrt();
            let ok = (s.mean() - expected).abs() <= bound.max(1e-12);
            ctx.check(
                format!("{label}: spatial count mean within 3 sigma"),
                ok,
                format!("mean {} vs {expected}", s.mean()),
            );
            Some(json!({ "mean": s.mean(), "tv_to_law_ii": s.pmf()?.total_variation(&rep.law_ii) }))
        } else {
            None
        };
        reports.push(json!({ "report": rep, "spatial": spatial }));
    }
    ctx.outputs.text("gibbs_paradox.csv", &csv)?;
    ctx.outputs.json("summary.json", &reports)?;
    Ok(())
}

// ---------------------------------------------------------------- colonies

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColonyParams {
    pub r: f64,
    pub k_small: f64,
    pub k_large: f64,
    pub migration: f64,
    pub t_max: f64,
    pub replicas: u64,
    pub target: Option<u64>,
    pub max_events: u64,
    pub tv_bound: f64,
}

impl Default for ColonyParams {
    fn default() -> Self {
        Self {
            r: 1.0,
            k_small: 4.0,
            k_large: 200.0,
            migration: 0.5,
            t_max: 3000.0,
            replicas: 8,
            target: None,
            max_events: 1_000_000_000,
            tv_bound: 0.05,
        }
    }
}

fn colonies(p: &ColonyParams, ctx: &mut Context) -> Result<(), RunError> {
    let model = ColonyModel::balanced(p.r, p.k_small, p.k_large, p.migration)?;
    let run = ColonyRun {
        t_max: p.t_max,
        replicas: p.replicas,
        target: p.target,
        max_events: p.max_events,
    };
    let rep = colony_simulation(&model, &run, ctx.seed)?;
    let top = rep
        .conditional
        .max_k()
        .max(rep.tilted.max_k())
        .max(rep.marginal_k.max_k());
    let mut csv = String::from("k,conditional,tilted,marginal\n");
    for k in 0..=top {
        csv.push_str(&format!(
            "{k},{},{},{}\n",
            fmt(rep.conditional.pmf(k)),
            fmt(rep.tilted.pmf(k)),
            fmt(rep.marginal_k.pmf(k))
        ));
    }
    ctx.outputs.text("colonies.csv", &csv)?;
    ctx.outputs
        .json("summary.json", &json!({ "model": model, "report": rep }))?;
    rep.check_stationarity(p.t_max)?;
    ctx.check(
        "conditional law close to the tilted marginal",
        rep.tv_tilted < p.tv_bound,
        format!("TV = {} (marginal TV {})", rep.tv_tilted, rep.tv_marginal),
    );
    Ok(())
}

// ---------------------------------------------------------------- shell

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShellParams {
    pub potential: Potential,
    pub n1: usize,
    pub n2: usize,
    pub h: f64,
    pub delta: f64,
    pub count: usize,
    pub sampler: Sampler,
    /// Monte Carlo draws for the bath density of states when no closed form exists.
    pub dos_samples: u64,
    pub ks_bound: f64,
    /// Bath sizes for the KS trend; empty skips it.
    pub trend_n2: Vec<usize>,
    pub trend_count: usize,
    /// Also write every sample.
    pub write_samples: bool,
}

impl Default for ShellParams {
    fn default() -> Self {
        Self {
            potential: Potential::Harmonic,
            n1: 2,
            n2: 200,
            h: 100.0,
            delta: 1.0,
            count: 100_000,
            sampler: Sampler::Auto,
            dos_samples: 1_000_000,
            ks_bound: 0.02,
            trend_n2: vec![20, 50, 200],
            trend_count: 100_000,
            write_samples: false,
        }
    }
}

/// Standard deviation of the Kolmogorov distribution, in units of `1/√n`.
const KS_SD: f64 = 0.2603;

fn shell_ks(
    p: &ShellParams,
    n2: usize,
    count: usize,
    seed: u64,
) -> Result<(ShellSummary, gibbslab::phase_space::ShellSampleSet, CanonicalPrediction), RunError> {
    let ham = SeparableHamiltonian::new(p.n1, n2, p.potential, p.potential)?;
    let req = ShellRequest {
        hamiltonian: ham,
        h: p.h,
        delta: p.delta,
        count,
        sampler: p.sampler,
        observables: Vec::new(),
    };
    let set = sample_energy_shell(&req, seed)?;
    let dos = bath_dos(&ham, p.h, p.dos_samples, seed.wrapping_add(1))?;
    let (psi, predicted) = bath_psi(&ham, p.h, &dos)?;
    let pred = CanonicalPrediction::new(p.potential, p.n1, psi, p.h + 0.5 * p.delta)?;
    let ks = ks_to_canonical(&set, &pred)?;
    Ok((
        ShellSummary {
            h: p.h,
            delta: p.delta,
            n1: p.n1,
            n2,
            ks,
            psi_measured: psi,
            psi_predicted: predicted.unwrap_or(f64::NAN),
        },
        set,
        pred,
    ))
}

fn shell(p: &ShellParams, ctx: &mut Context) -> Result<(), RunError> {
    let (summary, set, pred) = shell_ks(p, p.n2, p.count, ctx.seed)?;
    let mut sorted = set.u1.clone();
    sorted.sort_by(f64::total_cmp);
    let top = sorted.last().copied().unwrap_or(0.0);
    let mut csv = String::from("u1,empirical_cdf,canonical_cdf\n");
    for i in 0..=200 {
        let a = top * i as f64 / 200.0;
        csv.push_str(&format!(
            "{},{},{}\n",
            fmt(a),
            fmt(empirical_subsystem_cdf(&set, a)?),
            fmt(pred.cdf(a))
        ));
    }
    ctx.outputs.text("shell_cdf.csv", &csv)?;
    if p.write_samples {
        ctx.outputs.text("shell_samples.csv", &set.to_csv())?;
    }

    let mut trend = Vec::new();
    for (i, &n2) in p.trend_n2.iter().enumerate() {
        let (s, _, _) = shell_ks(p, n2, p.trend_count, ctx.seed.wrapping_add(100 + i as u64))?;
        trend.push(s);
    }
    let mut trend_csv = String::from("n2,ks,psi_measured\n");
    for s in &trend {
        trend_csv.push_str(&format!("{},{},{}\n", s.n2, fmt(s.ks), fmt(s.psi_measured)));
    }
    if !trend.is_empty() {
        ctx.outputs.text("shell_trend.csv", &trend_csv)?;
    }
    ctx.outputs.json(
        "summary.json",
        &json!({
            "summary": summary,
            "acceptance_rate": set.acceptance_rate(),
            "sampler": set.sampler,
            "trend": trend,
        }),
    )?;
    ctx.check(
        "KS distance to the canonical law",
        summary.ks < p.ks_bound,
        format!("KS = {}", summary.ks),
    );
    if trend.len() >= 2 {
        let sigma = KS_SD / (p.trend_count as f64).sqrt();
        let ok = trend.windows(2).all(|w| w[1].ks < w[0].ks + 2.0 * sigma * 2f64.sqrt());
        ctx.check(
            "KS decreases with bath size (within 2 sigma)",
            ok,
            format!("{:?}", trend.iter().map(|s| (s.n2, s.ks)).collect::<Vec<_>>()),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- legendre

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LegendreParams {
    pub entropy: EntropyDensity,
    pub beta: f64,
    pub volumes: Vec<f64>,
    pub gap_bound: f64,
    /// Smallest volume at which `gap/V` must be below the bound.
    pub bound_volume: f64,
}

impl Default for LegendreParams {
    fn default() -> Self {
        Self {
            entropy: EntropyDensity::LogEnergy { c: 1.5 },
            beta: 1.0,
            volumes: vec![1e2, 1e3, 1e4],
            gap_bound: 0.01,
            bound_volume: 1e3,
        }
    }
}

fn legendre(p: &LegendreParams, ctx: &mut Context) -> Result<(), RunError> {
    let s = ExtensiveEntropy::new(p.entropy, 1.0)?;
    s.check_concavity()?;
    let sweep = volume_sweep(&s, p.beta, &p.volumes)?;
    ctx.outputs.text("legendre_sweep.csv", &sweep_to_csv(&sweep))?;
    ctx.outputs.json("summary.json", &sweep)?;
    for r in sweep.iter().filter(|r| r.volume >= p.bound_volume) {
        ctx.check(
            format!("gap/V below bound at V={}", r.volume),
            r.gap_per_volume < p.gap_bound,
            format!("gap/V = {:e}", r.gap_per_volume),
        );
    }
    ctx.check(
        "gap/V decreasing in V",
        gap_per_volume_decreasing(&sweep),
        format!("{:?}", sweep.iter().map(|r| r.gap_per_volume).collect::<Vec<_>>()),
    );
    if let EntropyDensity::LogEnergy { c } = p.entropy {
        let worst = sweep
            .iter()
            .map(|r| {
                let sv = ExtensiveEntropy { volume: r.volume, ..s };
                let f = free_energy_legendre(&sv, p.beta).unwrap_or(f64::NAN);
                let closed = (c * r.volume / p.beta) * (1.0 - (c / p.beta).ln());
                ((f - closed) / closed.abs().max(1e-300)).abs()
            })
            .fold(0.0, f64::max);
        ctx.check(
            "Legendre root matches the closed form",
            worst < 1e-10,
            format!("max relative error {worst:e}"),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- fluctuation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluctuationFamily {
    Exponential,
    Gamma,
    /// Gamma laws with shape in {2, 3, 5} and scale in {0.5, 1, 2}.
    GammaGrid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluctuationParams {
    pub family: FluctuationFamily,
    pub lambda: f64,
    pub shape: f64,
    pub scale: f64,
    pub tolerance: f64,
    pub equality_tolerance: f64,
}

impl Default for FluctuationParams {
    fn default() -> Self {
        Self {
            family: FluctuationFamily::Exponential,
            lambda: 1.0,
            shape: 3.0,
            scale: 1.0,
            tolerance: 1e-9,
            equality_tolerance: 1e-12,
        }
    }
}

fn fluctuation(p: &FluctuationParams, ctx: &mut Context) -> Result<(), RunError> {
    let cases: Vec<(String, AnalyticFamily)> = match p.family {
        FluctuationFamily::Exponential => vec![(
            format!("exponential(lambda={})", p.lambda),
            AnalyticFamily::Exponential { rate: p.lambda },
        )],
        FluctuationFamily::Gamma => vec![(
            format!("gamma(k={}, theta={})", p.shape, p.scale),
            AnalyticFamily::Gamma {
                shape: p.shape,
                scale: p.scale,
            },
        )],
        FluctuationFamily::GammaGrid => [2.0, 3.0, 5.0]
            .iter()
            .flat_map(|&k| {
                [0.5, 1.0, 2.0].iter().map(move |&t| {
                    (
                        format!("gamma(k={k}, theta={t})"),
                        AnalyticFamily::Gamma { shape: k, scale: t },
                    )
                })
            })
            .collect(),
    };
    let mut csv = String::from("case,var_y,var_beta,lhs,rhs,margin,second_product\n");
    let mut reports = Vec::new();
    for (label, f) in cases {
        let r = fluctuation_bounds(&family(f)?)?;
        csv.push_str(&format!(
            "\"{label}\",{},{},{},{},{},{}\n",
            fmt(r.var_y),
            fmt(r.var_beta),
            fmt(r.lhs),
            fmt(r.rhs),
            fmt(r.margin),
            fmt(r.second_product)
        ));
        ctx.check(
            format!("{label}: var[Y] var[beta] >= (1 - f(0) E[Y])^2"),
            r.lhs >= r.rhs - p.tolerance,
            format!("lhs {} rhs {}", r.lhs, r.rhs),
        );
        ctx.check(
            format!("{label}: E[Y^2] E[beta^2] >= 1"),
            r.second_product >= 1.0 - p.tolerance,
            format!("{}", r.second_product),
        );
        if matches!(f, AnalyticFamily::Exponential { .. }) {
            ctx.check(
                format!("{label}: both sides vanish"),
                r.lhs.abs() <= p.equality_tolerance && r.rhs.abs() <= p.equality_tolerance,
                format!("lhs {:e} rhs {:e}", r.lhs, r.rhs),
            );
            ctx.check(
                format!("{label}: E[Y^2] E[beta^2] = 2"),
                (r.second_product - 2.0).abs() < p.tolerance,
                format!("{}", r.second_product),
            );
        }
        reports.push(json!({ "case": label, "report": r }));
    }
    ctx.outputs.text("fluctuation.csv", &csv)?;
    ctx.outputs.json("summary.json", &reports)?;
    Ok(())
}

// ---------------------------------------------------------------- kl bound

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KlBoundParams {
    pub pairs: usize,
    pub tolerance: f64,
    pub equality_tolerance: f64,
}

impl Default for KlBoundParams {
    fn default() -> Self {
        Self {
            pairs: 50,
            tolerance: 1e-9,
            equality_tolerance: 1e-8,
        }
    }
}

fn random_family(rng: &mut CounterRng) -> AnalyticFamily {
    if rng.uniform() < 0.5 {
        AnalyticFamily::Exponential {
            rate: 0.5 + 1.5 * rng.uniform(),
        }
    } else {
        AnalyticFamily::Gamma {
            shape: 1.0 + 5.0 * rng.uniform(),
            scale: 0.5 + 1.5 * rng.uniform(),
        }
    }
}

fn family_label(f: &AnalyticFamily) -> String {
    serde_json::to_string(f).unwrap_or_default().replace(',', ";")
}

fn kl_bound(p: &KlBoundParams, ctx: &mut Context) -> Result<(), RunError> {
    let mut rng = CounterRng::new(ctx.seed);
    let mut csv = String::from("pair,f,g,weight,lhs,rhs,slack\n");
    let (mut worst_slack, mut worst_identity) = (f64::INFINITY, 0.0f64);
    for i in 0..p.pairs {
        let ff = random_family(&mut rng);
        let gf = random_family(&mut rng);
        let w = 10f64.powf(2.0 * rng.uniform() - 1.0);
        let g = family(gf)?.scaled(w)?;
        let r = kl_lower_bound_check(&family(ff)?, &g)?;
        worst_slack = worst_slack.min(r.slack);
        worst_identity = worst_identity.max((r.slack - r.kl_to_normalized).abs());
        csv.push_str(&format!(
            "{i},{},{},{},{},{},{}\n",
            family_label(&ff),
            family_label(&gf),
            fmt(w),
            fmt(r.lhs),
            fmt(r.rhs),
            fmt(r.slack)
        ));
    }
    // Equality case: f is g normalized.
    let g = family(AnalyticFamily::Gamma { shape: 3.0, scale: 0.7 })?.scaled(5.0)?;
    let eq = kl_lower_bound_check(&g.normalize()?, &g)?;
    ctx.outputs.text("kl_bound.csv", &csv)?;
    ctx.outputs.json(
        "summary.json",
        &json!({
            "pairs": p.pairs,
            "min_slack": worst_slack,
            "max_identity_error": worst_identity,
            "equality_case": eq,
        }),
    )?;
    if p.pairs > 0 {
        ctx.check(
            "slack >= 0 for every pair",
            worst_slack >= -p.tolerance,
            format!("min slack {worst_slack:e}"),
        );
        ctx.check(
            "slack equals KL to the normalized reference",
            worst_identity < p.equality_tolerance,
            format!("max deviation {worst_identity:e}"),
        );
    }
    ctx.check(
        "equality when f is the normalized reference",
        eq.slack.abs() < p.equality_tolerance,
        format!("slack {:e}", eq.slack),
    );
    Ok(())
}

// ---------------------------------------------------------------- exchange

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExchangeParams {
    pub agents: usize,
    pub total: f64,
    pub cities: usize,
    pub city_size: usize,
    /// Selection window as a fraction of the total.
    pub delta_fraction: f64,
    pub snapshots: usize,
    /// Steps per replica; defaults to ten strides.
    pub steps_per_replica: Option<u64>,
    pub max_replicas: usize,
    pub injection_probability: f64,
    pub injection_scale: Option<f64>,
    pub bins: usize,
    pub tv_bound: f64,
    pub z_bound_modes: f64,
    pub z_bound_cities: f64,
    pub r_squared_floor: f64,
    /// Also run the open mode with a window as wide as the total.
    pub control: bool,
}

impl Default for ExchangeParams {
    fn default() -> Self {
        Self {
            agents: 10_000,
            total: 10_000.0,
            cities: 2,
            city_size: 10,
            delta_fraction: 0.01,
            snapshots: 100_000,
            steps_per_replica: None,
            max_replicas: 10_000_000,
            injection_probability: 0.1,
            injection_scale: None,
            bins: 40,
            tv_bound: 0.02,
            z_bound_modes: 3.0,
            z_bound_cities: 2.0,
            r_squared_floor: 0.99,
            control: false,
        }
    }
}

fn economy(p: &ExchangeParams, mode: ExchangeMode, delta_fraction: f64) -> Result<ExchangeEconomy, RunError> {
    let mut e = ExchangeEconomy::new(p.agents, p.total, mode, p.cities, p.city_size)?;
    e.injection_probability = p.injection_probability;
    e.injection_scale = p.injection_scale;
    e.bins = p.bins;
    if mode == ExchangeMode::Open {
        e = e.with_delta(delta_fraction * p.total)?;
    }
    e.validate()?;
    Ok(e)
}

fn exchange(p: &ExchangeParams, ctx: &mut Context) -> Result<(), RunError> {
    let run = ExchangeRun {
        steps: p.steps_per_replica.unwrap_or(10 * p.agents as u64),
        replicas: p.max_replicas,
        target_snapshots: Some(p.snapshots),
    };
    let a = run_exchange(&economy(p, ExchangeMode::Conserved, p.delta_fraction)?, &run, ctx.seed)?;
    let b = run_exchange(
        &economy(p, ExchangeMode::Open, p.delta_fraction)?,
        &run,
        ctx.seed.wrapping_add(1),
    )?;
    let control = if p.control {
        Some(run_exchange(
            &economy(p, ExchangeMode::Open, 1.0)?,
            &run,
            ctx.seed.wrapping_add(2),
        )?)
    } else {
        None
    };

    for (tag, out) in [("a", &a), ("b", &b)] {
        for h in &out.histograms {
            ctx.outputs
                .text(&format!("histogram_{tag}_city{}.csv", h.city), &h.to_csv())?;
        }
        ctx.outputs.json(&format!("histograms_{tag}.json"), &out.histograms)?;
    }
    let mut per_city = Vec::new();
    for (ha, hb) in a.histograms.iter().zip(&b.histograms) {
        let cmp = compare_ab(ha, hb)?;
        let fit = hb.log_linearity()?;
        let control_tv = match &control {
            Some(c) => Some(compare_ab(ha, &c.histograms[ha.city])?.tv),
            None => None,
        };
        ctx.check(
            format!("city {}: TV between modes", ha.city),
            cmp.tv < p.tv_bound,
            format!("TV = {}", cmp.tv),
        );
        ctx.check(
            format!("city {}: beta agrees between modes", ha.city),
            cmp.z() < p.z_bound_modes,
            format!(
                "beta_a {} beta_b {} se {} (z = {})",
                cmp.beta_a,
                cmp.beta_b,
                cmp.se,
                cmp.z()
            ),
        );
        ctx.check(
            format!("city {}: selected histogram is log-linear", ha.city),
            fit.r_squared > p.r_squared_floor,
            format!("R^2 = {}", fit.r_squared),
        );
        per_city.push(json!({
            "city": ha.city,
            "comparison": cmp,
            "z": cmp.z(),
            "log_linear_fit": fit,
            "control_tv": control_tv,
        }));
    }
    let mut cities = Vec::new();
    for (tag, out) in [("a", &a), ("b", &b)] {
        if out.histograms.len() >= 2 {
            let cmp = compare_ab(&out.histograms[0], &out.histograms[1])?;
            if tag == "a" {
                ctx.check(
                    "two cities share a common beta",
                    cmp.z() < p.z_bound_cities,
                    format!("beta {} vs {} (z = {})", cmp.beta_a, cmp.beta_b, cmp.z()),
                );
            }
            cities.push(json!({ "mode": tag, "comparison": cmp, "z": cmp.z() }));
        }
    }
    ctx.check(
        "conserved total does not drift",
        a.max_relative_drift <= 1e-9,
        format!("max relative drift {:e}", a.max_relative_drift),
    );
    let counts = |o: &gibbslab::exchange::ExchangeOutcome| {
        json!({
            "replicas": o.replicas_run,
            "snapshots_taken": o.snapshots_taken,
            "snapshots_accepted": o.snapshots_accepted,
            "max_relative_drift": o.max_relative_drift,
        })
    };
    ctx.outputs.json(
        "comparison.json",
        &json!({
            "mode_a": counts(&a),
            "mode_b": counts(&b),
            "control": control.as_ref().map(counts),
            "per_city": per_city,
            "cities": cities,
        }),
    )?;
    Ok(())
}

// ---------------------------------------------------------------- compare a/b

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareParams {
    /// JSON file with the histograms of run (a), as written by `exchange`.
    pub a: PathBuf,
    pub b: PathBuf,
    pub city: usize,
    pub tv_bound: f64,
    pub z_bound: f64,
}

impl Default for CompareParams {
    fn default() -> Self {
        Self {
            a: PathBuf::from("histograms_a.json"),
            b: PathBuf::from("histograms_b.json"),
            city: 0,
            tv_bound: 0.02,
            z_bound: 3.0,
        }
    }
}

fn load_histogram(path: &PathBuf, city: usize) -> Result<SubsystemHistogram, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    let all: Vec<SubsystemHistogram> = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(_) => vec![serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?],
    };
    all.into_iter()
        .find(|h| h.city == city)
        .ok_or_else(|| RunError::Config(format!("{} has no histogram for city {city}", path.display())))
}

fn compare(p: &CompareParams, ctx: &mut Context) -> Result<(), RunError> {
    let a = load_histogram(&p.a, p.city)?;
    let b = load_histogram(&p.b, p.city)?;
    let cmp = compare_ab(&a, &b)?;
    ctx.outputs
        .json("comparison.json", &json!({ "comparison": cmp, "z": cmp.z() }))?;
    ctx.check("total variation", cmp.tv < p.tv_bound, format!("TV = {}", cmp.tv));
    ctx.check("beta difference", cmp.z() < p.z_bound, format!("z = {}", cmp.z()));
    Ok(())
}
