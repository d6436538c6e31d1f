//! Energy-shell sampling of separable Hamiltonians `U_1(q) + U_2(Q)` and the
//! canonical law it induces on the small subsystem.
//!
//! Potentials are sums of one-coordinate terms. Purely harmonic systems are
//! sampled directly on the energy sphere. Other systems are sampled by
//! rejection: each block is drawn uniformly from a sublevel set that
//! contains its share of the shell, and the pair is kept when the total
//! lands in the shell.

use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::density::{AnalyticFamily, Density1D};
use crate::error::{invalid, Error, Result};
use crate::quad;
use crate::rng::CounterRng;
use crate::stats::{chi_square_uniform_pvalue, ks_distance, mean_se};

/// Accepted samples per independently seeded chunk.
const CHUNK: usize = 1000;

/// Acceptance rate below which rejection sampling gives up.
pub const MIN_ACCEPTANCE: f64 = 1e-6;

/// Trials after which a low acceptance rate is declared a stall.
const STALL_TRIALS: u64 = 10_000_000;

/// Fewest Monte Carlo hits per histogram bin for a density-of-states estimate.
pub const MIN_BIN_COUNT: u64 = 400;

/// One-coordinate potential, summed over coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    /// `x²/2`.
    Harmonic,
    /// `x⁴/4`.
    Quartic,
    /// `x²/2 + x⁴/4`.
    Mixed,
}

impl Potential {
    #[inline]
    pub fn term(self, x: f64) -> f64 {
        let x2 = x * x;
        match self {
            Self::Harmonic => 0.5 * x2,
            Self::Quartic => 0.25 * x2 * x2,
            Self::Mixed => 0.5 * x2 + 0.25 * x2 * x2,
        }
    }

    pub fn energy(self, xs: &[f64]) -> f64 {
        xs.iter().map(|&x| self.term(x)).sum()
    }

    /// `p` for potentials of the form `|x|^p / p`.
    pub fn homogeneity(self) -> Option<f64> {
        match self {
            Self::Harmonic => Some(2.0),
            Self::Quartic => Some(4.0),
            Self::Mixed => None,
        }
    }

    /// Exponent `p` of the `|x|^p/p` envelope whose sublevel sets contain
    /// this potential's.
    fn envelope(self) -> f64 {
        match self {
            Self::Harmonic => 2.0,
            Self::Quartic | Self::Mixed => 4.0,
        }
    }

    /// Largest `|x|` with `term(x) ≤ e`.
    pub fn max_coordinate(self, e: f64) -> f64 {
        match self {
            Self::Harmonic => (2.0 * e).sqrt(),
            Self::Quartic => (4.0 * e).powf(0.25),
            // x² = -1 + sqrt(1 + 4e)
            Self::Mixed => ((1.0 + 4.0 * e).sqrt() - 1.0).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparableHamiltonian {
    pub n1: usize,
    pub n2: usize,
    pub subsystem: Potential,
    pub bath: Potential,
}

impl SeparableHamiltonian {
    pub fn new(n1: usize, n2: usize, subsystem: Potential, bath: Potential) -> Result<Self> {
        let h = Self {
            n1,
            n2,
            subsystem,
            bath,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn harmonic(n1: usize, n2: usize) -> Result<Self> {
        Self::new(n1, n2, Potential::Harmonic, Potential::Harmonic)
    }

    pub fn quartic(n1: usize, n2: usize) -> Result<Self> {
        Self::new(n1, n2, Potential::Quartic, Potential::Quartic)
    }

    /// Requires `1 ≤ n1 ≤ n2 / 10`.
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n1 * 10 > self.n2 {
            return Err(Error::InvalidShell(format!(
                "need 1 <= n1 <= n2/10, got n1 = {}, n2 = {}",
                self.n1, self.n2
            )));
        }
        Ok(())
    }

    pub fn u1(&self, q: &[f64]) -> f64 {
        self.subsystem.energy(q)
    }

    pub fn u2(&self, big_q: &[f64]) -> f64 {
        self.bath.energy(big_q)
    }

    pub fn is_harmonic(&self) -> bool {
        self.subsystem == Potential::Harmonic && self.bath == Potential::Harmonic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Direct sphere sampling for harmonic systems, block rejection otherwise.
    Auto,
    /// Uniform on the sphere `|x| = √(2h)`; harmonic systems only.
    DirectSphere,
    /// Each block uniform in an exactly sampled sublevel ball; keep if in the shell.
    BallRejection,
    /// Each coordinate uniform in a bounding box; keep if in the shell.
    BoxRejection,
}

/// Function of the subsystem coordinates recorded for every sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum Observable {
    Constant,
    U1,
    CoordinateSquared(usize),
    CoordinateFourth(usize),
}

impl Observable {
    fn eval(self, h: &SeparableHamiltonian, q: &[f64]) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::U1 => h.u1(q),
            Self::CoordinateSquared(i) => q[i] * q[i],
            Self::CoordinateFourth(i) => q[i].powi(4),
        }
    }

    fn validate(self, n1: usize) -> Result<()> {
        match self {
            Self::CoordinateSquared(i) | Self::CoordinateFourth(i) if i >= n1 => {
                Err(invalid(format!("coordinate {i} out of range for n1 = {n1}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellRequest {
    pub hamiltonian: SeparableHamiltonian,
    pub h: f64,
    pub delta: f64,
    pub count: usize,
    pub sampler: Sampler,
    pub observables: Vec<Observable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellSampleSet {
    pub hamiltonian: SeparableHamiltonian,
    pub h: f64,
    pub delta: f64,
    /// The sampler actually used.
    pub sampler: Sampler,
    pub observables: Vec<Observable>,
    pub u1: Vec<f64>,
    pub total: Vec<f64>,
    /// `xi[j][i]` is observable `j` at sample `i`.
    pub xi: Vec<Vec<f64>>,
    /// Subsystem coordinates, `n1` per sample.
    pub q: Vec<f64>,
    pub trials: u64,
}

impl ShellSampleSet {
    pub fn len(&self) -> usize {
        self.u1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u1.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.len() as f64 / self.trials as f64
    }

    pub fn q_of(&self, i: usize) -> &[f64] {
        let n1 = self.hamiltonian.n1;
        &self.q[i * n1..(i + 1) * n1]
    }

    pub fn in_shell(&self, total: f64) -> bool {
        total > self.h - 0.5 * self.delta && total <= self.h + 0.5 * self.delta
    }

    /// Columns `u1, xi_1, ..., xi_k`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("u1");
        for j in 0..self.xi.len() {
            out.push_str(&format!(",xi_{}", j + 1));
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!("{:.16e}", self.u1[i]));
            for col in &self.xi {
                out.push_str(&format!(",{:.16e}", col[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// Uniform point in `{Σ|x|^p ≤ R^p}` (Barthe, Guédon, Mendelson, Naor).
fn uniform_in_lp_ball(rng: &mut CounterRng, p: f64, radius: f64, out: &mut [f64]) {
    let g = Gamma::new(1.0 / p, 1.0).expect("positive shape");
    let mut s = 0.0;
    for x in out.iter_mut() {
        let a: f64 = g.sample(rng);
        s += a;
        let mag = a.powf(1.0 / p);
        *x = if rng.next_bit() { mag } else { -mag };
    }
    let w: f64 = Exp1.sample(rng);
    let scale = radius / (s + w).powf(1.0 / p);
    for x in out.iter_mut() {
        *x *= scale;
    }
}

trait NextBit {
    fn next_bit(&mut self) -> bool;
}

impl NextBit for CounterRng {
    fn next_bit(&mut self) -> bool {
        self.uniform() < 0.5
    }
}

struct Chunk {
    u1: Vec<f64>,
    total: Vec<f64>,
    xi: Vec<Vec<f64>>,
    q: Vec<f64>,
    trials: u64,
}

/// Draw `count` points uniformly from `{h - δ/2 < U_1 + U_2 ≤ h + δ/2}`.
pub fn sample_energy_shell(req: &ShellRequest, seed: u64) -> Result<ShellSampleSet> {
    let ham = req.hamiltonian;
    ham.validate()?;
    if !(req.h > 0.0 && req.h.is_finite() && req.delta > 0.0 && req.delta.is_finite()) {
        return Err(Error::InvalidShell(format!("h = {}, δ = {}", req.h, req.delta)));
    }
    if req.delta >= 2.0 * req.h {
        return Err(Error::InvalidShell("shell must stay above zero energy".into()));
    }
    for o in &req.observables {
        o.validate(ham.n1)?;
    }
    let sampler = match req.sampler {
        Sampler::Auto if ham.is_harmonic() => Sampler::DirectSphere,
        Sampler::Auto => Sampler::BallRejection,
        Sampler::DirectSphere if !ham.is_harmonic() => {
            return Err(invalid("direct sphere sampling needs a harmonic system"))
        }
        s => s,
    };
    let root = CounterRng::new(seed);
    let chunks = req.count.div_ceil(CHUNK);
    let parts: Vec<Chunk> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let quota = CHUNK.min(req.count - c * CHUNK);
            sample_chunk(req, sampler, quota, root.split(c as u64))
        })
        .collect::<Result<_>>()?;

    let mut set = ShellSampleSet {
        hamiltonian: ham,
        h: req.h,
        delta: req.delta,
        sampler,
        observables: req.observables.clone(),
        u1: Vec::with_capacity(req.count),
        total: Vec::with_capacity(req.count),
        xi: vec![Vec::with_capacity(req.count); req.observables.len()],
        q: Vec::with_capacity(req.count * ham.n1),
        trials: 0,
    };
    for p in parts {
        set.u1.extend(p.u1);
        set.total.extend(p.total);
        for (dst, src) in set.xi.iter_mut().zip(p.xi) {
            dst.extend(src);
        }
        set.q.extend(p.q);
        set.trials += p.trials;
    }
    Ok(set)
}

fn sample_chunk(req: &ShellRequest, sampler: Sampler, quota: usize, mut rng: CounterRng) -> Result<Chunk> {
    let ham = req.hamiltonian;
    let (n1, n2) = (ham.n1, ham.n2);
    let (lo, hi) = (req.h - 0.5 * req.delta, req.h + 0.5 * req.delta);
    let mut chunk = Chunk {
        u1: Vec::with_capacity(quota),
        total: Vec::with_capacity(quota),
        xi: vec![Vec::with_capacity(quota); req.observables.len()],
        q: Vec::with_capacity(quota * n1),
        trials: 0,
    };
    let mut x = vec![0.0; n1 + n2];
    let radius_sphere = (2.0 * req.h).sqrt();
    let (p1, p2) = (ham.subsystem.envelope(), ham.bath.envelope());
    let (r1, r2) = ((p1 * hi).powf(1.0 / p1), (p2 * hi).powf(1.0 / p2));
    let (b1, b2) = (ham.subsystem.max_coordinate(hi), ham.bath.max_coordinate(hi));
    while chunk.u1.len() < quota {
        chunk.trials += 1;
        match sampler {
            Sampler::DirectSphere => {
                let mut s = 0.0;
                for v in x.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    s += z * z;
                    *v = z;
                }
                let scale = radius_sphere / s.sqrt();
                for v in x.iter_mut() {
                    *v *= scale;
                }
            }
            Sampler::BallRejection => {
                let (q, big_q) = x.split_at_mut(n1);
                uniform_in_lp_ball(&mut rng, p1, r1, q);
                uniform_in_lp_ball(&mut rng, p2, r2, big_q);
            }
            Sampler::BoxRejection => {
                for (i, v) in x.iter_mut().enumerate() {
                    let b = if i < n1 { b1 } else { b2 };
                    *v = (2.0 * rng.uniform() - 1.0) * b;
                }
            }
            Sampler::Auto => unreachable!("resolved by the caller"),
        }
        let (q, big_q) = x.split_at(n1);
        let u1 = ham.u1(q);
        let total = u1 + ham.u2(big_q);
        if total > lo && total <= hi {
            chunk.u1.push(u1);
            chunk.total.push(total);
            for (col, o) in chunk.xi.iter_mut().zip(&req.observables) {
                col.push(o.eval(&ham, q));
            }
            chunk.q.extend_from_slice(q);
        } else if chunk.trials >= STALL_TRIALS && (chunk.u1.len() as f64) < MIN_ACCEPTANCE * chunk.trials as f64 {
            return Err(Error::RejectionStall {
                rate: chunk.u1.len() as f64 / chunk.trials as f64,
            });
        }
    }
    Ok(chunk)
}

/// Fraction of samples with `U_1 ≤ a`.
pub fn empirical_subsystem_cdf(samples: &ShellSampleSet, a: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let below = samples.u1.iter().filter(|&&u| u <= a).count();
    Ok(below as f64 / samples.len() as f64)
}

/// Sample mean and standard error of a recorded observable.
pub fn conditional_expectation(samples: &ShellSampleSet, xi: Observable) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if xi == Observable::Constant {
        return Ok((1.0, 0.0));
    }
    let col = match samples.observables.iter().position(|&o| o == xi) {
        Some(j) => &samples.xi[j],
        None if xi == Observable::U1 => &samples.u1,
        None => return Err(invalid(format!("{xi:?} was not recorded"))),
    };
    Ok(mean_se(col))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DosMethod {
    /// Closed form where available, Monte Carlo otherwise.
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosRequest {
    pub potential: Potential,
    pub dim: usize,
    pub z_lo: f64,
    pub z_hi: f64,
    pub nodes: usize,
    pub method: DosMethod,
    pub mc_samples: u64,
    pub seed: u64,
}

/// Phase-space volume per unit energy, `f(z) dz = vol{z < U(x) ≤ z + dz}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityOfStates {
    pub potential: Potential,
    pub dim: usize,
    pub z: Vec<f64>,
    pub values: Vec<f64>,
    pub exact: bool,
    /// Log-density on the grid, or the closed-form power law.
    pub density: Density1D,
}

impl DensityOfStates {
    /// `d ln f / dz`.
    pub fn log_slope(&self, z: f64) -> Result<f64> {
        self.density.log_density_derivative(z)
    }
}

/// `ln` of the volume of `{Σ|x_i|^p ≤ R^p}` in `d` dimensions, per `R^d`.
fn ln_unit_lp_ball(p: f64, d: f64) -> f64 {
    d * (2.0f64.ln() + ln_gamma(1.0 + 1.0 / p)) - ln_gamma(1.0 + d / p)
}

pub fn density_of_states(req: &DosRequest) -> Result<DensityOfStates> {
    if req.dim == 0 || req.nodes < 5 || !(req.z_hi > req.z_lo && req.z_lo >= 0.0 && req.z_hi.is_finite()) {
        return Err(invalid(format!(
            "density of states needs dim >= 1, >= 5 nodes and 0 <= z_lo < z_hi; got {req:?}"
        )));
    }
    let use_exact = match req.method {
        DosMethod::Auto => req.potential.homogeneity().is_some(),
        DosMethod::Exact => true,
        DosMethod::MonteCarlo => false,
    };
    if use_exact {
        exact_dos(req)
    } else {
        monte_carlo_dos(req)
    }
}

fn exact_dos(req: &DosRequest) -> Result<DensityOfStates> {
    let p = req
        .potential
        .homogeneity()
        .ok_or_else(|| invalid("no closed-form density of states for the mixed potential"))?;
    let d = req.dim as f64;
    // V(z) = c (p z)^{d/p}, so f(z) = c (d/p) p^{d/p} z^{d/p - 1}.
    let ln_coeff = ln_unit_lp_ball(p, d) + (d / p).ln() + (d / p) * p.ln();
    let exponent = d / p - 1.0;
    let family = AnalyticFamily::PowerLaw {
        coeff: ln_coeff.exp(),
        exponent,
        upper: req.z_hi,
    };
    let z = grid(req.z_lo, req.z_hi, req.nodes);
    let values = z
        .iter()
        .map(|&zz| {
            if zz == 0.0 && exponent != 0.0 {
                if exponent > 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (ln_coeff + exponent * zz.ln()).exp()
            }
        })
        .collect();
    // The coefficient overflows for large dimensions; the log-slope only
    // needs the shape, so fall back to a unit coefficient.
    let density = if ln_coeff.exp().is_finite() {
        Density1D::family(family)?
    } else {
        Density1D::family(AnalyticFamily::PowerLaw {
            coeff: 1.0,
            exponent,
            upper: req.z_hi,
        })?
    };
    Ok(DensityOfStates {
        potential: req.potential,
        dim: req.dim,
        z,
        values,
        exact: true,
        density,
    })
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let dz = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + dz * i as f64 })
        .collect()
}

/// Histogram the energies of uniform points in a bounding box. Bins are
/// centred on the grid nodes.
fn monte_carlo_dos(req: &DosRequest) -> Result<DensityOfStates> {
    let n = req.nodes;
    let dz = (req.z_hi - req.z_lo) / (n - 1) as f64;
    let top = req.z_hi + 0.5 * dz;
    let bound = req.potential.max_coordinate(top);
    let ln_box = req.dim as f64 * (2.0 * bound).ln();
    let chunk = 100_000u64;
    let chunks = req.mc_samples.div_ceil(chunk);
    let root = CounterRng::new(req.seed);
    let potential = req.potential;
    let dim = req.dim;
    let z_lo = req.z_lo;
    let hists: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = root.split(c);
            let mut hist = vec![0u64; n];
            let todo = chunk.min(req.mc_samples - c * chunk);
            for _ in 0..todo {
                let mut e = 0.0;
                for _ in 0..dim {
                    e += potential.term((2.0 * rng.uniform() - 1.0) * bound);
                }
                let pos = (e - z_lo) / dz + 0.5;
                if pos >= 0.0 && pos < n as f64 {
                    hist[pos as usize] += 1;
                }
            }
            hist
        })
        .collect();
    let mut counts = vec![0u64; n];
    for h in hists {
        for (c, v) in counts.iter_mut().zip(h) {
            *c += v;
        }
    }
    if let Some(min) = counts.iter().min().copied().filter(|&m| m < MIN_BIN_COUNT) {
        return Err(Error::MonteCarloBudgetExceeded(format!(
            "a density-of-states bin has {min} hits (< {MIN_BIN_COUNT}) after {} samples",
            req.mc_samples
        )));
    }
    // Bins at the ends are half as wide when centred on the grid end points
    // and clipped at zero energy.
    let z = grid(req.z_lo, req.z_hi, n);
    let ln_n = (req.mc_samples as f64).ln();
    let log_values: Vec<f64> = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let left = (z[i] - 0.5 * dz).max(0.0);
            let width = z[i] + 0.5 * dz - left;
            (c as f64).ln() - ln_n + ln_box - width.ln()
        })
        .collect();
    let values = log_values.iter().map(|l| l.exp()).collect();
    let density = Density1D::grid(req.z_lo, req.z_hi, log_values)?;
    Ok(DensityOfStates {
        potential: req.potential,
        dim: req.dim,
        z,
        values,
        exact: false,
        density,
    })
}

/// The subsystem's canonical law `Z⁻¹ g_1(u) e^{-ψ u}` on `[0, upper]`,
/// where `g_1` is the subsystem density of states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalPrediction {
    pub potential: Potential,
    pub n1: usize,
    pub psi: f64,
    pub upper: f64,
}

impl CanonicalPrediction {
    pub fn new(potential: Potential, n1: usize, psi: f64, upper: f64) -> Result<Self> {
        if potential.homogeneity().is_none() {
            return Err(invalid("canonical prediction needs a homogeneous subsystem potential"));
        }
        if !(psi.is_finite() && upper > 0.0 && n1 > 0) {
            return Err(invalid(format!("ψ = {psi}, upper = {upper}")));
        }
        Ok(Self {
            potential,
            n1,
            psi,
            upper,
        })
    }

    /// Shape `α = n1/p` of the subsystem density of states `u^{α-1}`.
    pub fn alpha(&self) -> f64 {
        self.n1 as f64 / self.potential.homogeneity().unwrap_or(2.0)
    }

    /// `∫_0^a u^{α-1+j} e^{-ψu} du` up to a factor common to every `a`.
    fn partial(&self, a: f64, j: f64) -> f64 {
        let a = a.clamp(0.0, self.upper);
        let shape = self.alpha() + j;
        if self.psi > 0.0 {
            return gamma_lr(shape, self.psi * a) * (ln_gamma(shape) - shape * self.psi.ln()).exp();
        }
        // Substituting s = u^shape removes the endpoint singularity.
        let f = |s: f64| (-self.psi * s.powf(1.0 / shape)).exp();
        quad::integrate(f, 0.0, a.powf(shape)).unwrap_or(f64::NAN) / shape
    }

    pub fn cdf(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        if a >= self.upper {
            return 1.0;
        }
        self.partial(a, 0.0) / self.partial(self.upper, 0.0)
    }

    /// Predicted `E[ξ]`. Coordinate observables are predicted through the
    /// symmetry of the homogeneous potential: `E[|q_i|^p] = p E[U_1] / n1`.
    pub fn expectation(&self, xi: Observable) -> Result<f64> {
        let p = self.potential.homogeneity().unwrap_or(2.0);
        let mean_u = self.partial(self.upper, 1.0) / self.partial(self.upper, 0.0);
        match xi {
            Observable::Constant => Ok(1.0),
            Observable::U1 => Ok(mean_u),
            Observable::CoordinateSquared(_) if p == 2.0 => Ok(p * mean_u / self.n1 as f64),
            Observable::CoordinateFourth(_) if p == 4.0 => Ok(p * mean_u / self.n1 as f64),
            other => Err(invalid(format!(
                "no closed-form prediction for {other:?} with {:?}",
                self.potential
            ))),
        }
    }
}

/// KS distance between the sampled `U_1` law and the canonical prediction.
pub fn ks_to_canonical(samples: &ShellSampleSet, prediction: &CanonicalPrediction) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut sorted = samples.u1.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(ks_distance(&sorted, |a| prediction.cdf(a)))
}

/// Chi-square p-values for the sign pattern (orthant) of `q` inside each of
/// `bands` equal-count bands of `U_1`. Under the uniform law on the shell
/// and a potential even in each coordinate, all `2^{n1}` orthants are
/// equally likely within every band.
pub fn band_uniformity(samples: &ShellSampleSet, bands: usize) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let n1 = samples.hamiltonian.n1;
    if n1 > 16 || bands == 0 {
        return Err(invalid("orthant test needs n1 <= 16 and at least one band"));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples.u1[a].total_cmp(&samples.u1[b]));
    let per = samples.len() / bands;
    (0..bands)
        .map(|b| {
            let mut counts = vec![0u64; 1 << n1];
            for &i in &order[b * per..(b + 1) * per] {
                let cell = samples
                    .q_of(i)
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (j, &v)| acc | (usize::from(v < 0.0) << j));
                counts[cell] += 1;
            }
            chi_square_uniform_pvalue(&counts)
        })
        .collect()
}

/// Summary written next to the samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellSummary {
    pub h: f64,
    pub delta: f64,
    pub n1: usize,
    pub n2: usize,
    pub ks: f64,
    pub psi_measured: f64,
    pub psi_predicted: f64,
}

/// `ψ(h)` from the bath's density of states, and its closed form
/// `(n2/p - 1)/h` for homogeneous baths.
pub fn bath_psi(ham: &SeparableHamiltonian, h: f64, dos: &DensityOfStates) -> Result<(f64, Option<f64>)> {
    let measured = dos.log_slope(h)?;
    let predicted = ham.bath.homogeneity().map(|p| (ham.n2 as f64 / p - 1.0) / h);
    Ok((measured, predicted))
}

/// Density of states of the bath on `[h/10, 2h]`.
pub fn bath_dos(ham: &SeparableHamiltonian, h: f64, mc_samples: u64, seed: u64) -> Result<DensityOfStates> {
    density_of_states(&DosRequest {
        potential: ham.bath,
        dim: ham.n2,
        z_lo: 0.1 * h,
        z_hi: 2.0 * h,
        nodes: 257,
        method: DosMethod::Auto,
        mc_samples,
        seed,
    })
}
