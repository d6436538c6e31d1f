//! One-dimensional densities on non-negative supports, discrete pmfs, and
//! the divergences between them.
//!
//! A [`Density1D`] is either a closed-form [`AnalyticFamily`] or a uniform
//! grid of log-density values. Both carry a log-weight, so unnormalized
//! functions such as `2·e^{-x}` or a density of states are represented by
//! the same type. Grid values are stored as logarithms so exponential tails
//! stay representable; anything below `e^{-700}` counts as an exact zero.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::cell::Cell;

use crate::error::{invalid, Error, Result};
use crate::quad::{self, Quadrature};
use crate::serde_ext;

/// Log-density values below this are treated as exact zeros.
pub const LN_ZERO_FLOOR: f64 = -700.0;

/// `ln(1e16)`: infinite supports are cut where the density drops this far
/// below its reference maximum.
pub const LN_TRUNCATION: f64 = 36.841_361_487_904_734;

/// Closed-form families with analytic log-derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticFamily {
    Exponential {
        rate: f64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    /// `coeff * x^exponent` on `[0, upper]`; not normalized by itself.
    PowerLaw {
        coeff: f64,
        exponent: f64,
        upper: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Flat density on the window `(center - width/2, center + width/2]`.
    ShellIndicator {
        center: f64,
        width: f64,
    },
}

impl AnalyticFamily {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Self::Gamma { shape, scale } => shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite(),
            Self::PowerLaw { coeff, exponent, upper } => {
                coeff > 0.0 && exponent > -1.0 && upper > 0.0 && upper.is_finite()
            }
            Self::Uniform { lo, hi } => lo >= 0.0 && hi > lo && hi.is_finite(),
            Self::ShellIndicator { center, width } => width > 0.0 && center - 0.5 * width >= 0.0 && center.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("parameters out of range: {self:?}")))
        }
    }

    pub fn natural_support(&self) -> (f64, f64) {
        match *self {
            Self::Exponential { .. } | Self::Gamma { .. } => (0.0, f64::INFINITY),
            Self::PowerLaw { upper, .. } => (0.0, upper),
            Self::Uniform { lo, hi } => (lo, hi),
            Self::ShellIndicator { center, width } => (center - 0.5 * width, center + 0.5 * width),
        }
    }

    /// Log of the family's density (its own normalization) at `x`.
    pub fn ln_value(&self, x: f64) -> f64 {
        let (lo, hi) = self.natural_support();
        if !(x >= lo && x <= hi) {
            return f64::NEG_INFINITY;
        }
        match *self {
            Self::Exponential { rate } => rate.ln() - rate * x,
            Self::Gamma { shape, scale } => {
                if x == 0.0 {
                    return if shape < 1.0 {
                        f64::INFINITY
                    } else if shape == 1.0 {
                        -scale.ln()
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
            }
            Self::PowerLaw { coeff, exponent, .. } => {
                if exponent == 0.0 {
                    coeff.ln()
                } else {
                    coeff.ln() + exponent * x.ln()
                }
            }
            Self::Uniform { lo, hi } => -(hi - lo).ln(),
            Self::ShellIndicator { width, .. } => {
                if x == lo {
                    f64::NEG_INFINITY
                } else {
                    -width.ln()
                }
            }
        }
    }

    /// Closed-form `d ln f / dx`.
    pub fn d_ln_value(&self, x: f64) -> f64 {
        match *self {
            Self::Exponential { rate } => -rate,
            Self::Gamma { shape, scale } => (shape - 1.0) / x - 1.0 / scale,
            Self::PowerLaw { exponent, .. } => exponent / x,
            Self::Uniform { .. } | Self::ShellIndicator { .. } => 0.0,
        }
    }

    /// Family of `s * X` when `X` follows `self`.
    pub fn of_scaled_variable(&self, s: f64) -> Self {
        match *self {
            Self::Exponential { rate } => Self::Exponential { rate: rate / s },
            Self::Gamma { shape, scale } => Self::Gamma {
                shape,
                scale: scale * s,
            },
            Self::PowerLaw { coeff, exponent, upper } => Self::PowerLaw {
                coeff: coeff * s.powf(-exponent - 1.0),
                exponent,
                upper: upper * s,
            },
            Self::Uniform { lo, hi } => Self::Uniform { lo: lo * s, hi: hi * s },
            Self::ShellIndicator { center, width } => Self::ShellIndicator {
                center: center * s,
                width: width * s,
            },
        }
    }

    /// A point where the density is finite and close to its maximum.
    fn reference_point(&self) -> f64 {
        match *self {
            Self::Exponential { .. } => 0.0,
            Self::Gamma { shape, scale } => {
                if shape > 1.0 {
                    (shape - 1.0) * scale
                } else {
                    shape * scale
                }
            }
            Self::PowerLaw { upper, exponent, .. } => {
                if exponent >= 0.0 {
                    upper
                } else {
                    upper * 0.5
                }
            }
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::ShellIndicator { center, .. } => center,
        }
    }

    fn natural_scale(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Gamma { shape, scale } => scale * shape.max(1.0).sqrt(),
            Self::PowerLaw { upper, .. } => upper,
            Self::Uniform { lo, hi } => hi - lo,
            Self::ShellIndicator { width, .. } => width,
        }
    }
}

/// How the density values are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Family(AnalyticFamily),
    /// Natural-log density on `M` uniformly spaced nodes spanning the support.
    Grid {
        #[serde(with = "serde_ext::float_vec")]
        log_values: Vec<f64>,
    },
}

/// A non-negative function on an interval `[lo, hi]` of the half-line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density1D {
    #[serde(flatten)]
    repr: Representation,
    #[serde(with = "serde_ext::float_pair")]
    support: [f64; 2],
    /// Added to the stored log-values; `ln c` for a density scaled by `c`.
    #[serde(default)]
    ln_weight: f64,
    /// Integral of the input the last time [`Density1D::normalize`] ran.
    norm_const: f64,
}

impl Density1D {
    pub fn family(f: AnalyticFamily) -> Result<Self> {
        f.validate()?;
        let (lo, hi) = f.natural_support();
        Ok(Self {
            repr: Representation::Family(f),
            support: [lo, hi],
            ln_weight: 0.0,
            norm_const: 1.0,
        })
    }

    /// Family density restricted to `[lo, hi]` without renormalizing.
    pub fn family_on(f: AnalyticFamily, lo: f64, hi: f64) -> Result<Self> {
        f.validate()?;
        let (nlo, nhi) = f.natural_support();
        let (lo, hi) = (lo.max(nlo), hi.min(nhi));
        if !(hi > lo) || lo < 0.0 {
            return Err(invalid(format!("empty restriction [{lo}, {hi}] of {f:?}")));
        }
        Ok(Self {
            repr: Representation::Family(f),
            support: [lo, hi],
            ln_weight: 0.0,
            norm_const: 1.0,
        })
    }

    /// Grid density from log-values on uniformly spaced nodes over `[lo, hi]`.
    pub fn grid(lo: f64, hi: f64, log_values: Vec<f64>) -> Result<Self> {
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(invalid(format!("grid support [{lo}, {hi}]")));
        }
        if log_values.len() < 5 {
            return Err(invalid("grid densities need at least 5 nodes"));
        }
        if log_values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(invalid("grid log-values must be finite or -inf"));
        }
        let log_values = log_values
            .into_iter()
            .map(|v| if v < LN_ZERO_FLOOR { f64::NEG_INFINITY } else { v })
            .collect();
        Ok(Self {
            repr: Representation::Grid { log_values },
            support: [lo, hi],
            ln_weight: 0.0,
            norm_const: 1.0,
        })
    }

    /// Tabulate `ln_f` on `nodes` uniformly spaced points.
    pub fn tabulate<F: Fn(f64) -> f64>(lo: f64, hi: f64, nodes: usize, ln_f: F) -> Result<Self> {
        let dx = (hi - lo) / (nodes.max(2) - 1) as f64;
        let vals = (0..nodes)
            .map(|i| ln_f(if i + 1 == nodes { hi } else { lo + dx * i as f64 }))
            .map(|v| if v.is_nan() { f64::NEG_INFINITY } else { v })
            .collect();
        Self::grid(lo, hi, vals)
    }

    /// The same function multiplied by `c > 0`.
    pub fn scaled(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid(format!("scale factor {c}")));
        }
        self.ln_weight += c.ln();
        Ok(self)
    }

    /// Density of `s * X`.
    pub fn of_scaled_variable(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(invalid(format!("variable scale {s}")));
        }
        let support = [self.support[0] * s, self.support[1] * s];
        Ok(match &self.repr {
            Representation::Family(f) => Self {
                repr: Representation::Family(f.of_scaled_variable(s)),
                support,
                ln_weight: self.ln_weight,
                norm_const: self.norm_const,
            },
            Representation::Grid { log_values } => Self {
                repr: Representation::Grid {
                    log_values: log_values.iter().map(|v| v - s.ln()).collect(),
                },
                support,
                ln_weight: self.ln_weight,
                norm_const: self.norm_const,
            },
        })
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    pub fn analytic_family(&self) -> Option<AnalyticFamily> {
        match self.repr {
            Representation::Family(f) => Some(f),
            Representation::Grid { .. } => None,
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.support[0], self.support[1])
    }

    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    pub(crate) fn with_norm_const(mut self, c: f64) -> Self {
        self.norm_const = c;
        self
    }

    pub fn ln_weight(&self) -> f64 {
        self.ln_weight
    }

    /// Grid nodes, if this is a grid density.
    pub fn grid_nodes(&self) -> Option<Vec<f64>> {
        match &self.repr {
            Representation::Grid { log_values } => {
                let n = log_values.len();
                let dx = self.grid_dx(n);
                Some((0..n).map(|i| self.node(i, n, dx)).collect())
            }
            Representation::Family(_) => None,
        }
    }

    /// Log-values at the grid nodes including the weight.
    pub fn grid_log_values(&self) -> Option<Vec<f64>> {
        match &self.repr {
            Representation::Grid { log_values } => Some(log_values.iter().map(|v| v + self.ln_weight).collect()),
            Representation::Family(_) => None,
        }
    }

    fn grid_dx(&self, n: usize) -> f64 {
        (self.support[1] - self.support[0]) / (n - 1) as f64
    }

    fn node(&self, i: usize, n: usize, dx: f64) -> f64 {
        if i + 1 == n {
            self.support[1]
        } else {
            self.support[0] + dx * i as f64
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(x >= lo && x <= hi) {
            return f64::NEG_INFINITY;
        }
        match &self.repr {
            Representation::Family(f) => f.ln_value(x) + self.ln_weight,
            Representation::Grid { log_values } => {
                interp_log(log_values, lo, self.grid_dx(log_values.len()), x) + self.ln_weight
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// `d ln f / dy` at an interior point: closed form for families,
    /// fourth-order differences on the log-grid otherwise.
    pub fn log_density_derivative(&self, y: f64) -> Result<f64> {
        let (lo, hi) = self.support();
        if !(y > lo && y < hi) {
            return Err(Error::OutOfSupport { x: y, lo, hi });
        }
        let ln_here = self.ln_pdf(y);
        if ln_here == f64::NEG_INFINITY {
            return Err(Error::ZeroDensity(y));
        }
        match &self.repr {
            Representation::Family(f) => Ok(f.d_ln_value(y)),
            Representation::Grid { log_values } => {
                let dx = self.grid_dx(log_values.len());
                let d = grid_log_derivative(log_values, lo, dx, y);
                if d.is_finite() {
                    Ok(d)
                } else {
                    // Stencil touches a zero node; fall back to the interpolant.
                    let eps = 1e-3 * dx;
                    let (a, b) = ((y - eps).max(lo), (y + eps).min(hi));
                    Ok((self.ln_pdf(b) - self.ln_pdf(a)) / (b - a))
                }
            }
        }
    }

    /// Finite interval carrying all but a `1e-16` relative sliver of the mass.
    pub fn effective_support(&self) -> (f64, f64) {
        let (lo, hi) = self.support();
        if hi.is_finite() {
            return (lo, hi);
        }
        let f = match self.repr {
            Representation::Family(f) => f,
            Representation::Grid { .. } => unreachable!("grid supports are finite"),
        };
        let r = f.reference_point().max(lo);
        let ln_ref = f.ln_value(r);
        let target = ln_ref - LN_TRUNCATION;
        let below = |x: f64| f.ln_value(x) < target;
        let mut step = f.natural_scale();
        let mut a = r;
        let mut b = r + step;
        while !below(b) {
            a = b;
            step *= 2.0;
            b = r + step;
        }
        let cut = quad::bisect(|x| f.ln_value(x) - target, a, b, 1e-12).unwrap_or(b);
        (lo, cut)
    }

    /// `∫ g(x, ln f(x)) dx` over the effective support: adaptive Simpson for
    /// families, trapezoid over the nodes for grids.
    pub fn integrate_with<G: Fn(f64, f64) -> f64>(&self, g: G) -> Result<f64> {
        match &self.repr {
            Representation::Family(_) => {
                let (a, b) = self.effective_support();
                Quadrature::default().integrate(|x| g(x, self.ln_pdf(x)), a, b)
            }
            Representation::Grid { log_values } => {
                let n = log_values.len();
                let dx = self.grid_dx(n);
                let vals: Vec<f64> = (0..n)
                    .map(|i| g(self.node(i, n, dx), log_values[i] + self.ln_weight))
                    .collect();
                let v = quad::trapezoid(&vals, dx);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonIntegrable(format!("grid integral is {v}")))
                }
            }
        }
    }

    pub fn total_mass(&self) -> Result<f64> {
        let m = self.integrate_with(|_, l| l.exp())?;
        if m > 0.0 && m.is_finite() {
            Ok(m)
        } else {
            Err(Error::NonIntegrable(format!("total mass {m}")))
        }
    }

    /// Rescale to unit mass; records the input's integral as `norm_const`.
    pub fn normalize(&self) -> Result<Self> {
        let mass = self.total_mass()?;
        let mut out = self.clone();
        out.ln_weight -= mass.ln();
        out.norm_const = mass;
        Ok(out)
    }

    /// `∫ x^order f(x) dx`.
    pub fn moment(&self, order: u32) -> Result<f64> {
        self.integrate_with(|x, l| {
            if l == f64::NEG_INFINITY {
                0.0
            } else {
                x.powi(order as i32) * l.exp()
            }
        })
    }

    pub fn mean(&self) -> Result<f64> {
        self.moment(1)
    }

    /// Re-sample on `nodes` uniformly spaced points over `[lo, hi]`.
    pub fn to_grid(&self, lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        let mut g = Self::tabulate(lo, hi, nodes, |x| self.ln_pdf(x))?;
        g.norm_const = self.norm_const;
        Ok(g)
    }
}

fn interp_log(vals: &[f64], lo: f64, dx: f64, x: f64) -> f64 {
    let n = vals.len();
    let pos = ((x - lo) / dx).clamp(0.0, (n - 1) as f64);
    let j = (pos.floor() as usize).min(n - 2);
    let t = pos - j as f64;
    let (a, b) = (vals[j], vals[j + 1]);
    if t == 0.0 {
        return a;
    }
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        // Linear in density space across a zero node.
        let v = (1.0 - t) * a.exp() + t * b.exp();
        return if v > 0.0 { v.ln() } else { f64::NEG_INFINITY };
    }
    let s = cubic_window(n, j);
    let w = [vals[s], vals[s + 1], vals[s + 2], vals[s + 3]];
    if w.iter().all(|v| v.is_finite()) {
        lagrange4(&w, pos - s as f64)
    } else {
        (1.0 - t) * a + t * b
    }
}

/// First index of a 4-node window around interval `j`.
fn cubic_window(n: usize, j: usize) -> usize {
    j.saturating_sub(1).min(n - 4)
}

/// Cubic Lagrange interpolation through nodes 0..3 at (fractional) position `u`.
fn lagrange4(w: &[f64; 4], u: f64) -> f64 {
    let l0 = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0;
    let l1 = u * (u - 2.0) * (u - 3.0) / 2.0;
    let l2 = -u * (u - 1.0) * (u - 3.0) / 2.0;
    let l3 = u * (u - 1.0) * (u - 2.0) / 6.0;
    l0 * w[0] + l1 * w[1] + l2 * w[2] + l3 * w[3]
}

fn node_derivative(v: &[f64], i: usize, dx: f64) -> f64 {
    let n = v.len();
    let d = if i >= 2 && i + 2 < n {
        v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]
    } else if i == 0 {
        -25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]
    } else if i == 1 {
        -3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]
    } else if i == n - 1 {
        25.0 * v[n - 1] - 48.0 * v[n - 2] + 36.0 * v[n - 3] - 16.0 * v[n - 4] + 3.0 * v[n - 5]
    } else {
        3.0 * v[n - 1] + 10.0 * v[n - 2] - 18.0 * v[n - 3] + 6.0 * v[n - 4] - v[n - 5]
    };
    d / (12.0 * dx)
}

fn grid_log_derivative(vals: &[f64], lo: f64, dx: f64, y: f64) -> f64 {
    let n = vals.len();
    let pos = ((y - lo) / dx).clamp(0.0, (n - 1) as f64);
    let j = (pos.floor() as usize).min(n - 2);
    let s = cubic_window(n, j);
    let w = [
        node_derivative(vals, s, dx),
        node_derivative(vals, s + 1, dx),
        node_derivative(vals, s + 2, dx),
        node_derivative(vals, s + 3, dx),
    ];
    lagrange4(&w, pos - s as f64)
}

/// `∫ f ln(f / g̃)`. `g` may be unnormalized; `f` is expected to have unit mass.
pub fn kl_divergence(f: &Density1D, g: &Density1D) -> Result<f64> {
    let mismatch = Cell::new(None);
    let v = f.integrate_with(|x, lf| {
        if lf == f64::NEG_INFINITY || lf < LN_ZERO_FLOOR {
            return 0.0;
        }
        let lg = g.ln_pdf(x);
        if lg == f64::NEG_INFINITY {
            // A zero of g at one of its own support endpoints is a null set.
            let (glo, ghi) = g.support();
            if x == glo || x == ghi {
                return 0.0;
            }
            if mismatch.get().is_none() {
                mismatch.set(Some(x));
            }
            return 0.0;
        }
        lf.exp() * (lf - lg)
    })?;
    match mismatch.get() {
        Some(x) => Err(Error::SupportMismatch(x)),
        None => Ok(v),
    }
}

/// `-ln ∫ g̃`.
pub fn neg_log_norm(g: &Density1D) -> Result<f64> {
    Ok(-g.total_mass()?.ln())
}

/// Total-variation distance `½∫|f - g|` over the union of effective supports.
pub fn total_variation(f: &Density1D, g: &Density1D) -> Result<f64> {
    let (fa, fb) = f.effective_support();
    let (ga, gb) = g.effective_support();
    let (a, b) = (fa.min(ga), fb.max(gb));
    let q = Quadrature {
        panels: 256,
        ..Quadrature::default()
    };
    let v = q.integrate(|x| (f.pdf(x) - g.pdf(x)).abs(), a, b)?;
    Ok(0.5 * v)
}

/// Probability mass function on `0..=max_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePmf {
    probs: Vec<f64>,
}

impl DiscretePmf {
    /// Takes non-negative weights and normalizes them.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("pmf weights must be finite and non-negative"));
        }
        let s: f64 = weights.iter().sum();
        if !(s > 0.0) {
            return Err(Error::ZeroMass("all weights are zero".into()));
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / s).collect(),
        })
    }

    /// Normalize `exp(ln_w)` with a log-sum-exp shift.
    pub fn from_ln_weights(ln_w: &[f64]) -> Result<Self> {
        let m = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY || m.is_nan() {
            return Err(Error::ZeroMass("all log-weights are -inf".into()));
        }
        if m == f64::INFINITY {
            return Err(invalid("log-weight is +inf"));
        }
        Self::new(ln_w.iter().map(|l| (l - m).exp()).collect())
    }

    /// Poisson(λ) truncated to `0..=max_k`.
    pub fn poisson(lambda: f64, max_k: usize) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("Poisson mean {lambda}")));
        }
        if lambda == 0.0 {
            return Self::point_mass(0, max_k);
        }
        let lw: Vec<f64> = (0..=max_k).map(|k| ln_poisson(k as u64, lambda)).collect();
        Self::from_ln_weights(&lw)
    }

    pub fn binomial(n: u64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("binomial probability {p}")));
        }
        let lw: Vec<f64> = (0..=n).map(|k| ln_binomial(n, k, p)).collect();
        Self::from_ln_weights(&lw)
    }

    pub fn uniform(max_k: usize) -> Self {
        Self {
            probs: vec![1.0 / (max_k + 1) as f64; max_k + 1],
        }
    }

    pub fn point_mass(k: usize, max_k: usize) -> Result<Self> {
        if k > max_k {
            return Err(invalid("point mass outside support"));
        }
        let mut probs = vec![0.0; max_k + 1];
        probs[k] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_k(&self) -> usize {
        self.probs.len() - 1
    }

    /// `p(k)`, zero beyond the support.
    pub fn pmf(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn ln_pmf(&self, k: usize) -> f64 {
        self.pmf(k).ln()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| (k as f64 - m).powi(2) * p)
            .sum()
    }

    /// Restrict to `0..=max_k` and renormalize.
    pub fn truncated(&self, max_k: usize) -> Result<Self> {
        let mut w: Vec<f64> = self.probs.iter().take(max_k + 1).copied().collect();
        w.resize(max_k + 1, 0.0);
        Self::new(w)
    }

    pub fn total_variation(&self, other: &Self) -> f64 {
        let n = self.probs.len().max(other.probs.len());
        0.5 * (0..n).map(|k| (self.pmf(k) - other.pmf(k)).abs()).sum::<f64>()
    }

    /// `Σ p ln(p/q)`.
    pub fn kl(&self, other: &Self) -> Result<f64> {
        let mut s = 0.0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let q = other.pmf(k);
            if q == 0.0 {
                return Err(Error::SupportMismatch(k as f64));
            }
            s += p * (p / q).ln();
        }
        Ok(s)
    }

    /// `k,p` rows with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,p\n");
        for (k, p) in self.probs.iter().enumerate() {
            out.push_str(&format!("{k},{p:.16e}\n"));
        }
        out
    }
}

pub fn ln_poisson(k: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * lambda.ln() - lambda - ln_factorial(k)
}

pub fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

pub fn ln_binomial(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let ln_choose = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    let a = if k == 0 { 0.0 } else { k as f64 * p.ln() };
    let b = if n == k { 0.0 } else { (n - k) as f64 * (-p).ln_1p() };
    ln_choose + a + b
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn exp1() -> Density1D {
        Density1D::family(AnalyticFamily::Exponential { rate: 1.0 }).unwrap()
    }

    #[test]
    fn normalize_truncated_exponential() {
        let d = Density1D::family_on(AnalyticFamily::Exponential { rate: 1.0 }, 0.0, 40.0).unwrap();
        let n = d.normalize().unwrap();
        assert_abs_diff_eq!(n.norm_const(), 1.0 - (-40f64).exp(), epsilon = 1e-9);
        assert_abs_diff_eq!(n.total_mass().unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn normalize_gamma_is_identity() {
        let d = Density1D::family(AnalyticFamily::Gamma { shape: 2.0, scale: 1.0 }).unwrap();
        let n = d.normalize().unwrap();
        assert_abs_diff_eq!(n.norm_const(), 1.0, epsilon = 1e-9);
        for x in [0.1, 1.0, 5.0] {
            assert_abs_diff_eq!(n.pdf(x), d.pdf(x), epsilon = 1e-9);
        }
    }

    #[test]
    fn normalize_grid_against_fine_midpoint() {
        let ln_f = |x: f64| x.ln() - x * x;
        let d = Density1D::tabulate(0.0, 6.0, 2001, ln_f).unwrap();
        let n = d.normalize().unwrap();
        // Midpoint oracle at 10x resolution.
        let m = 20_000;
        let h = 6.0 / m as f64;
        let oracle: f64 = (0..m).map(|i| (i as f64 + 0.5) * h).map(|x| ln_f(x).exp() * h).sum();
        assert_abs_diff_eq!(oracle, 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(n.norm_const(), oracle, epsilon = 1e-6);
    }

    #[test]
    fn normalize_rejects_zero_mass() {
        let d = Density1D::grid(0.0, 1.0, vec![f64::NEG_INFINITY; 10]).unwrap();
        assert!(matches!(d.normalize(), Err(Error::NonIntegrable(_))));
    }

    #[test]
    fn log_derivative_examples() {
        let e = Density1D::family(AnalyticFamily::Exponential { rate: 2.0 }).unwrap();
        assert_eq!(e.log_density_derivative(1.0).unwrap(), -2.0);
        let g = Density1D::family(AnalyticFamily::Gamma { shape: 3.0, scale: 1.0 }).unwrap();
        assert_eq!(g.log_density_derivative(0.5).unwrap(), 3.0);
        let grid = g.to_grid(0.0, 30.0, 3001).unwrap();
        assert_abs_diff_eq!(grid.log_density_derivative(0.5).unwrap(), 3.0, epsilon = 1e-4);
    }

    #[test]
    fn log_derivative_errors() {
        let g = Density1D::family(AnalyticFamily::Gamma { shape: 3.0, scale: 1.0 }).unwrap();
        assert!(matches!(g.log_density_derivative(0.0), Err(Error::OutOfSupport { .. })));
        assert!(matches!(
            g.log_density_derivative(-1.0),
            Err(Error::OutOfSupport { .. })
        ));
        let z = Density1D::grid(0.0, 1.0, vec![f64::NEG_INFINITY; 10]).unwrap();
        assert!(matches!(z.log_density_derivative(0.5), Err(Error::ZeroDensity(_))));
    }

    #[test]
    fn moments() {
        assert_abs_diff_eq!(exp1().moment(1).unwrap(), 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(exp1().moment(2).unwrap(), 2.0, epsilon = 2e-8);
        let g = Density1D::family(AnalyticFamily::Gamma { shape: 2.0, scale: 3.0 }).unwrap();
        // k * theta
        assert_abs_diff_eq!(g.moment(1).unwrap(), 6.0, epsilon = 6e-8);
    }

    #[test]
    fn kl_examples() {
        let e = exp1();
        assert_abs_diff_eq!(kl_divergence(&e, &e).unwrap(), 0.0, epsilon = 1e-10);
        let e2 = exp1().scaled(2.0).unwrap();
        assert_abs_diff_eq!(kl_divergence(&e, &e2).unwrap(), -(2f64.ln()), epsilon = 1e-9);

        let g = Density1D::family(AnalyticFamily::Gamma { shape: 2.0, scale: 1.0 }).unwrap();
        // Midpoint oracle on a fine grid of x ln x terms: ln(g/e) = ln x.
        let (m, top) = (400_000, 60.0);
        let h = top / m as f64;
        let oracle: f64 = (0..m)
            .map(|i| (i as f64 + 0.5) * h)
            .map(|x| x * (-x).exp() * x.ln() * h)
            .sum();
        assert_abs_diff_eq!(kl_divergence(&g, &e).unwrap(), oracle, epsilon = 1e-6);
    }

    #[test]
    fn kl_support_mismatch() {
        let f = Density1D::family(AnalyticFamily::Uniform { lo: 0.0, hi: 2.0 }).unwrap();
        let g = Density1D::family(AnalyticFamily::Uniform { lo: 0.0, hi: 1.0 }).unwrap();
        assert!(matches!(kl_divergence(&f, &g), Err(Error::SupportMismatch(_))));
    }

    #[test]
    fn neg_log_norm_examples() {
        let g = Density1D::family_on(AnalyticFamily::Exponential { rate: 1.0 }, 0.0, 40.0).unwrap();
        assert_abs_diff_eq!(neg_log_norm(&g).unwrap(), 0.0, epsilon = 1e-9);
        let g2 = g.clone().scaled(2.0).unwrap();
        assert_abs_diff_eq!(neg_log_norm(&g2).unwrap(), -(2f64.ln()), epsilon = 1e-9);
        // x e^{-x} on [0, 40]: Γ(2) = 1.
        let xg = Density1D::family_on(AnalyticFamily::Gamma { shape: 2.0, scale: 1.0 }, 0.0, 40.0).unwrap();
        assert_abs_diff_eq!(neg_log_norm(&xg).unwrap(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn scaled_variable_mean() {
        let g = Density1D::family(AnalyticFamily::Gamma { shape: 2.0, scale: 1.0 }).unwrap();
        let s = g.of_scaled_variable(0.02).unwrap();
        assert_abs_diff_eq!(s.mean().unwrap(), 0.04, epsilon = 1e-10);
        let grid = g.to_grid(0.0, 40.0, 4001).unwrap();
        let gs = grid.of_scaled_variable(0.5).unwrap();
        assert_abs_diff_eq!(gs.total_mass().unwrap(), 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(gs.mean().unwrap(), 1.0, epsilon = 1e-5);
    }

    #[test]
    fn json_round_trip_with_infinite_values() {
        let g = Density1D::grid(0.0, 1.0, vec![f64::NEG_INFINITY, -1.0, -0.5, -0.2, -0.1]).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains("\"grid\""));
        assert_eq!(serde_json::from_str::<Density1D>(&s).unwrap(), g);
        let e = exp1();
        let s = serde_json::to_string(&e).unwrap();
        assert!(s.contains("\"inf\""));
        assert_eq!(serde_json::from_str::<Density1D>(&s).unwrap(), e);
    }

    #[test]
    fn pmf_basics() {
        let p = DiscretePmf::binomial(4, 0.5).unwrap();
        assert_abs_diff_eq!(p.pmf(2), 6.0 / 16.0, epsilon = 1e-13);
        assert_abs_diff_eq!(p.total(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.mean(), 2.0, epsilon = 1e-12);
        let q = DiscretePmf::poisson(3.0, 60).unwrap();
        assert_abs_diff_eq!(q.mean(), 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(q.variance(), 3.0, epsilon = 1e-9);
        assert_eq!(p.total_variation(&p), 0.0);
        assert!(DiscretePmf::new(vec![0.0, 0.0]).is_err());
        assert!(matches!(
            DiscretePmf::point_mass(0, 3)
                .unwrap()
                .kl(&DiscretePmf::point_mass(1, 3).unwrap()),
            Err(Error::SupportMismatch(_))
        ));
    }
}
