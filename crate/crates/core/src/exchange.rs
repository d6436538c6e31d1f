//! Kinetic exchange economy: agents trade a conserved or slowly fluctuating
//! quantity pairwise, and the holdings of small groups of agents ("cities")
//! are recorded either unconditionally or only when the total sits in a
//! narrow window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::CounterRng;
use crate::stats::{self, LinearFit};

/// Fewest agents an economy may have.
pub const MIN_AGENTS: usize = 1000;

/// Fraction of each replica's steps discarded before snapshots are taken.
pub const BURN_IN_FRACTION: f64 = 0.1;

/// Replicas launched per parallel batch when running toward a snapshot target.
const REPLICA_BATCH: usize = 64;

/// Batches used for the batch-means standard error of a city's mean holding.
const SE_BATCHES: usize = 100;

/// Fewest counts a bin needs to enter the log-linearity fit.
const MIN_FIT_COUNT: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExchangeMode {
    /// (a) The total is fixed and every snapshot is recorded.
    Conserved,
    /// (b) The total drifts under small external injections and snapshots are
    /// recorded only when it lies in `(h - δ/2, h + δ/2]`.
    Open,
}

/// How holdings are set before the first exchange.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// Uniform on the simplex of total `h`, the stationary law of the
    /// exchange kernel.
    #[default]
    Stationary,
    /// Every agent starts with `h/N`.
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExchangeEconomy {
    pub agents: usize,
    /// Target total `h`; the exact total in conserved mode.
    pub total: f64,
    /// Agent indices making up each city.
    pub cities: Vec<Vec<usize>>,
    pub mode: ExchangeMode,
    /// Selection window width; required in open mode.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_injection_probability")]
    pub injection_probability: f64,
    /// Half-width `ε` of the uniform injection; defaults to `0.01 h/N`.
    #[serde(default)]
    pub injection_scale: Option<f64>,
    /// Exchanges between snapshots; defaults to `N`.
    #[serde(default)]
    pub stride: Option<usize>,
    #[serde(default)]
    pub initial: InitialState,
    /// Optional relabelling: the agent acted on when the sampler draws index
    /// `k` is `labels[k]`.
    #[serde(default)]
    pub labels: Option<Vec<usize>>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Fewest accepted snapshots an open-mode run must produce.
    #[serde(default = "default_min_accepted")]
    pub min_accepted: usize,
}

fn default_injection_probability() -> f64 {
    0.1
}

fn default_bins() -> usize {
    40
}

fn default_min_accepted() -> usize {
    1000
}

impl ExchangeEconomy {
    /// Economy with `city_count` disjoint cities of `city_size` consecutive agents.
    pub fn new(agents: usize, total: f64, mode: ExchangeMode, city_count: usize, city_size: usize) -> Result<Self> {
        let cities = (0..city_count)
            .map(|c| (c * city_size..(c + 1) * city_size).collect())
            .collect();
        let e = Self {
            agents,
            total,
            cities,
            mode,
            delta: None,
            injection_probability: default_injection_probability(),
            injection_scale: None,
            stride: None,
            initial: InitialState::default(),
            labels: None,
            bins: default_bins(),
            min_accepted: default_min_accepted(),
        };
        if mode == ExchangeMode::Conserved {
            e.validate()?;
        }
        Ok(e)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        self.delta = Some(delta);
        self.validate()?;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: ExchangeMode) -> Self {
        self.mode = mode;
        self
    }

    /// The same economy with agent `k` renamed `perm[k]`: cities are mapped
    /// through the permutation and the sampler acts on renamed agents.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        let mut out = self.clone();
        let base: Vec<usize> = match &self.labels {
            Some(l) => l.clone(),
            None => (0..self.agents).collect(),
        };
        if perm.len() != self.agents {
            return Err(invalid("permutation length differs from the agent count"));
        }
        out.labels = Some(base.iter().map(|&k| perm[k]).collect());
        out.cities = self
            .cities
            .iter()
            .map(|c| c.iter().map(|&k| perm[k]).collect())
            .collect();
        out.validate()?;
        Ok(out)
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.agents)
    }

    pub fn injection_scale(&self) -> f64 {
        self.injection_scale.unwrap_or(0.01 * self.total / self.agents as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.agents;
        if n < MIN_AGENTS {
            return Err(invalid(format!("need at least {MIN_AGENTS} agents, got {n}")));
        }
        if !(self.total > 0.0 && self.total.is_finite()) {
            return Err(invalid(format!("total must be positive, got {}", self.total)));
        }
        if self.cities.is_empty() {
            return Err(invalid("need at least one city"));
        }
        for (c, city) in self.cities.iter().enumerate() {
            if city.is_empty() || city.len() > n / 100 {
                return Err(invalid(format!(
                    "city {c} has {} agents; need 1..={}",
                    city.len(),
                    n / 100
                )));
            }
            let mut sorted = city.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != city.len() || sorted[sorted.len() - 1] >= n {
                return Err(invalid(format!("city {c} repeats agents or names one outside 0..{n}")));
            }
        }
        if let Some(labels) = &self.labels {
            let mut seen = vec![false; n];
            if labels.len() != n || labels.iter().any(|&k| k >= n || std::mem::replace(&mut seen[k], true)) {
                return Err(invalid("labels must be a permutation of the agents"));
            }
        }
        if self.mode == ExchangeMode::Open {
            match self.delta {
                Some(d) if d > 0.0 && d.is_finite() => {}
                other => return Err(invalid(format!("open mode needs a positive delta, got {other:?}"))),
            }
        }
        if !(0.0..=1.0).contains(&self.injection_probability) {
            return Err(invalid("injection probability must lie in [0, 1]"));
        }
        if !(self.injection_scale() >= 0.0 && self.injection_scale().is_finite()) {
            return Err(invalid("injection scale must be non-negative"));
        }
        if self.stride() == 0 || self.bins == 0 {
            return Err(invalid("stride and bin count must be positive"));
        }
        Ok(())
    }

    /// Upper edge of the histogram range, `(n₁ + 8√n₁ + 10) h/N`.
    pub fn histogram_upper(&self, city_size: usize) -> f64 {
        let n1 = city_size as f64;
        (n1 + 8.0 * n1.sqrt() + 10.0) * self.total / self.agents as f64
    }
}

/// Replica layout for [`run_exchange`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExchangeRun {
    /// Elementary steps per replica, burn-in included.
    pub steps: u64,
    /// Independent replicas; with a target this is the maximum launched.
    pub replicas: usize,
    /// Stop once this many snapshots are recorded and keep exactly that many.
    #[serde(default)]
    pub target_snapshots: Option<usize>,
}

/// Binned law of one city's holding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsystemHistogram {
    pub mode: ExchangeMode,
    pub city: usize,
    pub city_size: usize,
    pub agents: usize,
    pub total: f64,
    pub upper: f64,
    pub counts: Vec<u64>,
    pub masses: Vec<f64>,
    pub samples: usize,
    /// Snapshots above `upper`, counted in the last bin.
    pub overflow: u64,
    pub mean: f64,
    /// `n₁ / mean`, the slope of the city's log-density beyond its
    /// `x^{n₁-1}` volume factor.
    pub beta_hat: f64,
    pub beta_se: f64,
}

impl SubsystemHistogram {
    fn from_values(econ: &ExchangeEconomy, city: usize, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySampleSet);
        }
        let city_size = econ.cities[city].len();
        let upper = econ.histogram_upper(city_size);
        let bins = econ.bins;
        let width = upper / bins as f64;
        let mut counts = vec![0u64; bins];
        let mut overflow = 0;
        for &v in values {
            let b = (v / width) as usize;
            if b >= bins {
                overflow += 1;
            }
            counts[b.min(bins - 1)] += 1;
        }
        let samples = values.len();
        let masses = counts.iter().map(|&c| c as f64 / samples as f64).collect();
        let (mean, se) = stats::batch_means_se(values, SE_BATCHES);
        let beta_hat = city_size as f64 / mean;
        Ok(Self {
            mode: econ.mode,
            city,
            city_size,
            agents: econ.agents,
            total: econ.total,
            upper,
            counts,
            masses,
            samples,
            overflow,
            mean,
            beta_hat,
            beta_se: beta_hat * se / mean,
        })
    }

    pub fn bin_width(&self) -> f64 {
        self.upper / self.counts.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let w = self.bin_width();
        let mut out = String::from("bin_left,bin_right,mass\n");
        for (i, m) in self.masses.iter().enumerate() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e}\n",
                i as f64 * w,
                (i + 1) as f64 * w,
                m
            ));
        }
        out
    }

    /// Least-squares line through `ln(mass / ∫_bin x^{n₁-1} dx)` against the
    /// bin centre, over bins with at least 20 counts. The slope estimates
    /// `-β`, and `r_squared` measures log-linearity.
    pub fn log_linearity(&self) -> Result<LinearFit> {
        let w = self.bin_width();
        let n1 = self.city_size as i32;
        let unit = self.total / self.agents as f64;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let last = self.counts.len() - 1;
        for (i, &c) in self.counts.iter().enumerate() {
            if c < MIN_FIT_COUNT || (i == last && self.overflow > 0) {
                continue;
            }
            let (l, r) = (i as f64 * w / unit, (i + 1) as f64 * w / unit);
            let volume = (r.powi(n1) - l.powi(n1)) / n1 as f64;
            xs.push((i as f64 + 0.5) * w);
            ys.push((self.masses[i] / volume).ln());
        }
        if xs.len() < 3 {
            return Err(invalid("fewer than three occupied bins for the log-linearity fit"));
        }
        stats::ols(&xs, &ys)
    }
}

/// Result of [`run_exchange`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeOutcome {
    pub mode: ExchangeMode,
    pub histograms: Vec<SubsystemHistogram>,
    pub replicas_run: usize,
    pub snapshots_taken: usize,
    pub snapshots_accepted: usize,
    /// Largest `|Σx - h| / h` seen at a snapshot; zero in open mode.
    pub max_relative_drift: f64,
    pub seed: u64,
}

struct ReplicaOutput {
    /// `values[t * cities + c]` is city `c` at accepted snapshot `t`.
    values: Vec<f64>,
    taken: usize,
    accepted: usize,
    max_drift: f64,
}

fn initial_holdings(econ: &ExchangeEconomy, labels: &[usize], rng: &mut CounterRng) -> Vec<f64> {
    let n = econ.agents;
    let mut x = vec![0.0; n];
    match econ.initial {
        InitialState::Equal => x.fill(econ.total / n as f64),
        InitialState::Stationary => {
            let draws: Vec<f64> = (0..n).map(|_| rng.exponential(1.0)).collect();
            let sum: f64 = draws.iter().sum();
            for (k, d) in draws.into_iter().enumerate() {
                x[labels[k]] = econ.total * d / sum;
            }
        }
    }
    x
}

fn run_replica(econ: &ExchangeEconomy, labels: &[usize], steps: u64, mut rng: CounterRng) -> ReplicaOutput {
    let n = econ.agents;
    let h = econ.total;
    let open = econ.mode == ExchangeMode::Open;
    let half = 0.5 * econ.delta.unwrap_or(0.0);
    let eps = econ.injection_scale();
    let p_inject = econ.injection_probability;
    let stride = econ.stride() as u64;
    let burn = (steps as f64 * BURN_IN_FRACTION) as u64;

    let mut x = initial_holdings(econ, labels, &mut rng);
    let mut total: f64 = x.iter().sum();
    let mut out = ReplicaOutput {
        values: Vec::new(),
        taken: 0,
        accepted: 0,
        max_drift: 0.0,
    };
    for t in 1..=steps {
        if open && rng.uniform() < p_inject {
            let a = labels[rng.index(n)];
            let moved = (x[a] + (2.0 * rng.uniform() - 1.0) * eps).max(0.0);
            total += moved - x[a];
            x[a] = moved;
        }
        let i = rng.index(n);
        let mut j = rng.index(n - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (labels[i], labels[j]);
        let pooled = x[a] + x[b];
        let share = rng.uniform() * pooled;
        x[a] = share;
        x[b] = pooled - share;

        if t > burn && t % stride == 0 {
            out.taken += 1;
            if open {
                if !(total > h - half && total <= h + half) {
                    continue;
                }
            } else {
                let sum: f64 = x.iter().sum();
                out.max_drift = out.max_drift.max((sum - h).abs() / h);
            }
            out.accepted += 1;
            for city in &econ.cities {
                out.values.push(city.iter().map(|&k| x[k]).sum());
            }
        }
    }
    out
}

/// Run independent replicas of the economy, each from its own split stream,
/// and bin each city's holding at the recorded snapshots. With a snapshot
/// target, replicas are launched in batches until the target is met and the
/// surplus is dropped, so the output does not depend on the thread count.
pub fn run_exchange(econ: &ExchangeEconomy, run: &ExchangeRun, seed: u64) -> Result<ExchangeOutcome> {
    econ.validate()?;
    if run.replicas == 0 {
        return Err(invalid("need at least one replica"));
    }
    let root = CounterRng::new(seed);
    let labels: Vec<usize> = match &econ.labels {
        Some(l) => l.clone(),
        None => (0..econ.agents).collect(),
    };
    let cities = econ.cities.len();
    let mut values = Vec::new();
    let (mut taken, mut accepted, mut drift) = (0, 0, 0.0f64);
    let mut launched = 0;
    let batch = if run.target_snapshots.is_some() {
        REPLICA_BATCH
    } else {
        run.replicas
    };
    while launched < run.replicas {
        if run.target_snapshots.is_some_and(|t| accepted >= t) {
            break;
        }
        let end = (launched + batch).min(run.replicas);
        let outputs: Vec<ReplicaOutput> = (launched..end)
            .into_par_iter()
            .map(|r| run_replica(econ, &labels, run.steps, root.split(r as u64)))
            .collect();
        for o in outputs {
            values.extend(o.values);
            taken += o.taken;
            accepted += o.accepted;
            drift = drift.max(o.max_drift);
        }
        launched = end;
    }
    if let Some(t) = run.target_snapshots {
        if accepted > t {
            accepted = t;
            values.truncate(t * cities);
        }
    }

    let required = match econ.mode {
        ExchangeMode::Conserved => 1,
        ExchangeMode::Open => econ.min_accepted,
    };
    if accepted < required {
        return Err(Error::InsufficientAcceptedSnapshots { accepted, required });
    }
    let histograms = (0..cities)
        .map(|c| {
            let city_values: Vec<f64> = values.iter().skip(c).step_by(cities).copied().collect();
            SubsystemHistogram::from_values(econ, c, &city_values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExchangeOutcome {
        mode: econ.mode,
        histograms,
        replicas_run: launched,
        snapshots_taken: taken,
        snapshots_accepted: accepted,
        max_relative_drift: drift,
        seed,
    })
}

/// Divergences between two histograms of the same city.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub tv: f64,
    /// `KL(a‖b) + KL(b‖a)` after adding half a count to every bin.
    pub skl: f64,
    pub beta_a: f64,
    pub beta_b: f64,
    /// `sqrt(se_a² + se_b²)`.
    pub se: f64,
}

impl ComparisonReport {
    /// `|β̂_a - β̂_b|` in units of the pooled standard error.
    pub fn z(&self) -> f64 {
        if self.se > 0.0 {
            (self.beta_a - self.beta_b).abs() / self.se
        } else if self.beta_a == self.beta_b {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

pub fn compare_ab(a: &SubsystemHistogram, b: &SubsystemHistogram) -> Result<ComparisonReport> {
    if a.counts.len() != b.counts.len()
        || a.upper != b.upper
        || a.city_size != b.city_size
        || a.agents != b.agents
        || a.total != b.total
    {
        return Err(Error::BinningMismatch);
    }
    let tv = 0.5 * a.masses.iter().zip(&b.masses).map(|(p, q)| (p - q).abs()).sum::<f64>();
    let smooth = |h: &SubsystemHistogram| -> Vec<f64> {
        let denom = h.samples as f64 + 0.5 * h.counts.len() as f64;
        h.counts.iter().map(|&c| (c as f64 + 0.5) / denom).collect()
    };
    let (p, q) = (smooth(a), smooth(b));
    let skl = p.iter().zip(&q).map(|(p, q)| (p - q) * (p / q).ln()).sum::<f64>();
    Ok(ComparisonReport {
        tv,
        skl,
        beta_a: a.beta_hat,
        beta_b: b.beta_hat,
        se: a.beta_se.hypot(b.beta_se),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn run(steps: u64, replicas: usize) -> ExchangeRun {
        ExchangeRun {
            steps,
            replicas,
            target_snapshots: None,
        }
    }

    #[test]
    fn validation() {
        assert!(ExchangeEconomy::new(999, 1.0, ExchangeMode::Conserved, 1, 1).is_err());
        assert!(ExchangeEconomy::new(1000, 1.0, ExchangeMode::Conserved, 1, 11).is_err());
        assert!(ExchangeEconomy::new(1000, 0.0, ExchangeMode::Conserved, 1, 1).is_err());
        let open = ExchangeEconomy::new(1000, 1.0, ExchangeMode::Open, 1, 1).unwrap();
        assert!(open.validate().is_err());
        assert!(open.with_delta(0.01).is_ok());
    }

    #[test]
    fn conserved_total_does_not_drift() {
        let mut econ = ExchangeEconomy::new(1000, 7.0, ExchangeMode::Conserved, 2, 5).unwrap();
        econ.initial = InitialState::Equal;
        let out = run_exchange(&econ, &run(200_000, 2), 1).unwrap();
        assert!(out.max_relative_drift <= 1e-9, "{}", out.max_relative_drift);
        assert_eq!(out.snapshots_taken, 2 * 180);
        for h in &out.histograms {
            assert_abs_diff_eq!(h.masses.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_agent_holding_is_exponential() {
        // A long chain from equal holdings, so the exponential law is reached
        // by the dynamics rather than imposed by the initial state.
        let mut econ = ExchangeEconomy::new(1000, 1000.0, ExchangeMode::Conserved, 4, 1).unwrap();
        econ.initial = InitialState::Equal;
        let out = run_exchange(&econ, &run(20_000_000, 1), 5).unwrap();
        for h in &out.histograms {
            assert!((h.beta_hat - 1.0).abs() < 0.05, "beta {} ± {}", h.beta_hat, h.beta_se);
            let fit = h.log_linearity().unwrap();
            assert!(fit.r_squared > 0.99);
            assert!((fit.slope + 1.0).abs() < 0.1, "slope {}", fit.slope);
        }
    }

    #[test]
    fn equal_cities_share_a_beta() {
        let econ = ExchangeEconomy::new(1000, 1.0, ExchangeMode::Conserved, 2, 10).unwrap();
        // A two-standard-error check rejects one seed in twenty by chance;
        // the seed is fixed.
        let out = run_exchange(&econ, &run(10_000, 2000), 0).unwrap();
        let cmp = compare_ab(&out.histograms[0], &out.histograms[1]).unwrap();
        assert!(cmp.z() < 2.0, "{cmp:?}");
        assert_abs_diff_eq!(cmp.beta_a, 1000.0, epsilon = 0.05 * 1000.0);
    }

    #[test]
    fn no_snapshots_is_an_error() {
        let econ = ExchangeEconomy::new(1000, 1.0, ExchangeMode::Conserved, 1, 1).unwrap();
        assert_eq!(
            run_exchange(&econ, &run(999, 3), 0),
            Err(Error::InsufficientAcceptedSnapshots {
                accepted: 0,
                required: 1
            })
        );
        let open = econ.with_mode(ExchangeMode::Open).with_delta(1e-9).unwrap();
        assert!(matches!(
            run_exchange(&open, &run(5000, 3), 0),
            Err(Error::InsufficientAcceptedSnapshots { required: 1000, .. })
        ));
    }

    #[test]
    fn open_mode_matches_conserved_mode() {
        let conserved = ExchangeEconomy::new(1000, 1.0, ExchangeMode::Conserved, 1, 10).unwrap();
        let open = conserved
            .clone()
            .with_mode(ExchangeMode::Open)
            .with_delta(0.01)
            .unwrap();
        let target = ExchangeRun {
            steps: 10_000,
            replicas: 20_000,
            target_snapshots: Some(20_000),
        };
        let a = run_exchange(&conserved, &target, 1).unwrap();
        let b = run_exchange(&open, &target, 2).unwrap();
        assert_eq!(a.snapshots_accepted, 20_000);
        assert_eq!(b.snapshots_accepted, 20_000);
        assert!(b.snapshots_taken > b.snapshots_accepted);
        let cmp = compare_ab(&a.histograms[0], &b.histograms[0]).unwrap();
        assert!(cmp.tv < 0.04, "{cmp:?}");
        assert!(cmp.z() < 3.0, "{cmp:?}");
        let fit = b.histograms[0].log_linearity().unwrap();
        assert!(fit.r_squared > 0.99, "{fit:?}");
    }

    #[test]
    fn relabeling_leaves_histograms_unchanged() {
        let econ = ExchangeEconomy::new(1000, 3.0, ExchangeMode::Conserved, 3, 4).unwrap();
        let perm: Vec<usize> = (0..1000).map(|k| (k * 7 + 3) % 1000).collect();
        let moved = econ.relabeled(&perm).unwrap();
        assert_ne!(moved.cities, econ.cities);
        let a = run_exchange(&econ, &run(20_000, 20), 9).unwrap();
        let b = run_exchange(&moved, &run(20_000, 20), 9).unwrap();
        assert_eq!(a.histograms, b.histograms);
    }

    #[test]
    fn identical_histograms_do_not_diverge() {
        let econ = ExchangeEconomy::new(1000, 1.0, ExchangeMode::Conserved, 1, 3).unwrap();
        let out = run_exchange(&econ, &run(10_000, 50), 4).unwrap();
        let cmp = compare_ab(&out.histograms[0], &out.histograms[0]).unwrap();
        assert_eq!((cmp.tv, cmp.skl, cmp.z()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn mismatched_binning_is_rejected() {
        let econ = ExchangeEconomy::new(1000, 1.0, ExchangeMode::Conserved, 2, 3).unwrap();
        let mut other = econ.clone();
        other.cities[1] = vec![100, 101];
        let a = run_exchange(&econ, &run(10_000, 5), 4).unwrap();
        let b = run_exchange(&other, &run(10_000, 5), 4).unwrap();
        assert_eq!(
            compare_ab(&a.histograms[1], &b.histograms[1]),
            Err(Error::BinningMismatch)
        );
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let econ = ExchangeEconomy::new(1000, 1.0, ExchangeMode::Open, 1, 5)
            .unwrap()
            .with_delta(0.05)
            .unwrap();
        let target = ExchangeRun {
            steps: 10_000,
            replicas: 1000,
            target_snapshots: Some(1500),
        };
        let a = run_exchange(&econ, &target, 8).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_exchange(&econ, &target, 8).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn histogram_csv_layout() {
        let econ = ExchangeEconomy::new(1000, 1.0, ExchangeMode::Conserved, 1, 2).unwrap();
        let out = run_exchange(&econ, &run(10_000, 10), 4).unwrap();
        let csv = out.histograms[0].to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "bin_left,bin_right,mass");
        assert_eq!(lines.len(), 41);
    }
}
