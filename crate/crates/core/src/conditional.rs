//! Exact conditional laws of `X` given `X + Y = h` (or `X + Y` in a shell),
//! computed by quadrature. These are the ground truth the asymptotic
//! canonical forms in [`crate::limit_law`] are measured against.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma as GammaDist, Normal};

use crate::density::{AnalyticFamily, Density1D, DiscretePmf, LN_TRUNCATION};
use crate::error::{invalid, Error, Result};
use crate::quad::Quadrature;

/// Default number of nodes for materialized conditional laws.
pub const DEFAULT_NODES: usize = 2048;

/// Points probed to locate the bulk of a conditional density before it is
/// materialized.
const PROBES: usize = 4097;

/// Finite-difference step for black-box couplings.
const EXPERT_STEP: f64 = 1e-5;

/// Log-density `ln f_{Y|X}(y; x)` supplied by the caller.
pub type LnConditionalFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// How the bath `Y` depends on the small variable `X`.
#[derive(Clone)]
pub enum Coupling {
    /// `f_{Y|X}(y; x) = f_Y(y)`.
    Independent { bath: Density1D },
    /// `f_{Y|X}(y; x) = f_Y(y - shift * x)`.
    AdditiveShift { bath: Density1D, shift: f64 },
    /// Gamma marginals joined by a Gaussian copula with correlation `rho`.
    GaussianCopula {
        x_shape: f64,
        x_scale: f64,
        y_shape: f64,
        y_scale: f64,
        rho: f64,
    },
    /// Arbitrary log-density; partials by finite differences with step `1e-5`.
    Expert { ln_conditional: LnConditionalFn },
}

impl fmt::Debug for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Independent { bath } => f.debug_struct("Independent").field("bath", bath).finish(),
            Self::AdditiveShift { bath, shift } => f
                .debug_struct("AdditiveShift")
                .field("bath", bath)
                .field("shift", shift)
                .finish(),
            Self::GaussianCopula { rho, .. } => f.debug_struct("GaussianCopula").field("rho", rho).finish(),
            Self::Expert { .. } => f.write_str("Expert"),
        }
    }
}

/// Pair law of `(X, Y)`: marginal of `X` plus conditional of `Y` given `X`.
#[derive(Debug, Clone)]
pub struct JointLaw {
    marginal_x: Density1D,
    coupling: Coupling,
    /// The coupling sees `x * x_scale`; `n` for the sequence `X_n = X / n`.
    x_scale: f64,
}

impl JointLaw {
    pub fn independent(marginal_x: Density1D, bath: Density1D) -> Self {
        Self {
            marginal_x,
            coupling: Coupling::Independent { bath },
            x_scale: 1.0,
        }
    }

    pub fn additive_shift(marginal_x: Density1D, bath: Density1D, shift: f64) -> Result<Self> {
        if !shift.is_finite() {
            return Err(invalid("shift must be finite"));
        }
        Ok(Self {
            marginal_x,
            coupling: Coupling::AdditiveShift { bath, shift },
            x_scale: 1.0,
        })
    }

    /// `X ~ Gamma(x_shape, x_scale)` and `Y ~ Gamma(y_shape, y_scale)` coupled
    /// through a Gaussian copula.
    pub fn gamma_copula(x: (f64, f64), y: (f64, f64), rho: f64) -> Result<Self> {
        if !(rho > -1.0 && rho < 1.0) {
            return Err(invalid(format!("copula correlation {rho}")));
        }
        AnalyticFamily::Gamma { shape: y.0, scale: y.1 }.validate()?;
        let marginal_x = Density1D::family(AnalyticFamily::Gamma { shape: x.0, scale: x.1 })?;
        Ok(Self {
            marginal_x,
            coupling: Coupling::GaussianCopula {
                x_shape: x.0,
                x_scale: x.1,
                y_shape: y.0,
                y_scale: y.1,
                rho,
            },
            x_scale: 1.0,
        })
    }

    /// Black-box coupling; the caller vouches that each conditional integrates to one.
    pub fn expert(marginal_x: Density1D, ln_conditional: LnConditionalFn) -> Self {
        Self {
            marginal_x,
            coupling: Coupling::Expert { ln_conditional },
            x_scale: 1.0,
        }
    }

    pub fn marginal_x(&self) -> &Density1D {
        &self.marginal_x
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn is_independent(&self) -> bool {
        matches!(self.coupling, Coupling::Independent { .. })
    }

    /// Law of `(X / n, Y)`.
    pub fn scaled_down(&self, n: f64) -> Result<Self> {
        Ok(Self {
            marginal_x: self.marginal_x.of_scaled_variable(1.0 / n)?,
            coupling: self.coupling.clone(),
            x_scale: self.x_scale * n,
        })
    }

    /// Support of `Y` given `X = 0`.
    pub fn bath_support(&self) -> (f64, f64) {
        match &self.coupling {
            Coupling::Independent { bath } | Coupling::AdditiveShift { bath, .. } => bath.support(),
            Coupling::GaussianCopula { .. } | Coupling::Expert { .. } => (0.0, f64::INFINITY),
        }
    }

    /// `ln f_{Y|X}(y; x)`.
    pub fn ln_conditional(&self, y: f64, x: f64) -> f64 {
        let xb = x * self.x_scale;
        match &self.coupling {
            Coupling::Independent { bath } => bath.ln_pdf(y),
            Coupling::AdditiveShift { bath, shift } => bath.ln_pdf(y - shift * xb),
            Coupling::GaussianCopula { .. } => match self.copula_terms(y, xb) {
                Some(t) => t.ln_c + t.ln_fy,
                None => f64::NEG_INFINITY,
            },
            Coupling::Expert { ln_conditional } => ln_conditional(y, x),
        }
    }

    /// `∂ ln f_{Y|X}(y; x) / ∂y`.
    pub fn d_ln_conditional_dy(&self, y: f64, x: f64) -> Result<f64> {
        let xb = x * self.x_scale;
        match &self.coupling {
            Coupling::Independent { bath } => bath.log_density_derivative(y),
            Coupling::AdditiveShift { bath, shift } => bath.log_density_derivative(y - shift * xb),
            Coupling::GaussianCopula { rho, .. } => {
                let t = self.copula_terms(y, xb).ok_or_else(|| boundary(y, x))?;
                let dlnc_db = -(rho * rho * t.b - rho * t.a) / (1.0 - rho * rho);
                let v = dlnc_db * t.fy / t.phi_b + t.dln_fy;
                finite_or_boundary(v, y, x)
            }
            Coupling::Expert { ln_conditional } => {
                let h = EXPERT_STEP;
                let v = (ln_conditional(y + h, x) - ln_conditional(y - h, x)) / (2.0 * h);
                finite_or_boundary(v, y, x)
            }
        }
    }

    /// `∂ ln f_{Y|X}(y; x) / ∂x`; identically zero for independent pairs.
    pub fn d_ln_conditional_dx(&self, y: f64, x: f64) -> Result<f64> {
        let xb = x * self.x_scale;
        match &self.coupling {
            Coupling::Independent { .. } => Ok(0.0),
            Coupling::AdditiveShift { bath, shift } => {
                Ok(-shift * self.x_scale * bath.log_density_derivative(y - shift * xb)?)
            }
            Coupling::GaussianCopula { rho, .. } => {
                let t = self.copula_terms(y, xb).ok_or_else(|| boundary(y, x))?;
                let dlnc_da = -(rho * rho * t.a - rho * t.b) / (1.0 - rho * rho);
                let v = dlnc_da * t.fx / t.phi_a * self.x_scale;
                finite_or_boundary(v, y, x)
            }
            Coupling::Expert { ln_conditional } => {
                let h = EXPERT_STEP;
                // Second-order one-sided at the x = 0 boundary.
                let v = if x - h < 0.0 {
                    (-3.0 * ln_conditional(y, x) + 4.0 * ln_conditional(y, x + h) - ln_conditional(y, x + 2.0 * h))
                        / (2.0 * h)
                } else {
                    (ln_conditional(y, x + h) - ln_conditional(y, x - h)) / (2.0 * h)
                };
                finite_or_boundary(v, y, x)
            }
        }
    }

    fn copula_terms(&self, y: f64, xb: f64) -> Option<CopulaTerms> {
        let Coupling::GaussianCopula {
            x_shape,
            x_scale,
            y_shape,
            y_scale,
            rho,
        } = self.coupling
        else {
            return None;
        };
        if !(y > 0.0 && xb >= 0.0) {
            return None;
        }
        let gx = GammaDist::new(x_shape, 1.0 / x_scale).ok()?;
        let gy = GammaDist::new(y_shape, 1.0 / y_scale).ok()?;
        let std = Normal::new(0.0, 1.0).ok()?;
        let (u, v) = (gx.cdf(xb), gy.cdf(y));
        let a = std.inverse_cdf(u);
        let b = std.inverse_cdf(v);
        if !(a.is_finite() && b.is_finite()) {
            return None;
        }
        let r2 = rho * rho;
        let ln_c = -0.5 * (1.0 - r2).ln() - (r2 * (a * a + b * b) - 2.0 * rho * a * b) / (2.0 * (1.0 - r2));
        let fy = gy.pdf(y);
        Some(CopulaTerms {
            a,
            b,
            ln_c,
            fy,
            ln_fy: gy.ln_pdf(y),
            dln_fy: (y_shape - 1.0) / y - 1.0 / y_scale,
            fx: gx.pdf(xb),
            phi_a: std.pdf(a),
            phi_b: std.pdf(b),
        })
    }
}

struct CopulaTerms {
    a: f64,
    b: f64,
    ln_c: f64,
    fy: f64,
    ln_fy: f64,
    dln_fy: f64,
    fx: f64,
    phi_a: f64,
    phi_b: f64,
}

fn boundary(y: f64, x: f64) -> Error {
    Error::BoundaryEvaluation(format!("partials undefined at (y = {y}, x = {x})"))
}

fn finite_or_boundary(v: f64, y: f64, x: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(boundary(y, x))
    }
}

/// Continuous conditional law, materialized on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalLaw {
    #[serde(flatten)]
    density: Density1D,
    pub h: f64,
    /// Shell width; zero means conditioning on the exact level `X + Y = h`.
    pub delta: f64,
}

impl ConditionalLaw {
    pub fn new(density: Density1D, h: f64, delta: f64) -> Self {
        Self { density, h, delta }
    }

    pub fn density(&self) -> &Density1D {
        &self.density
    }

    pub fn into_density(self) -> Density1D {
        self.density
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        self.density.ln_pdf(x)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.density.pdf(x)
    }

    pub fn nodes(&self) -> Vec<f64> {
        self.density.grid_nodes().unwrap_or_default()
    }

    pub fn log_values(&self) -> Vec<f64> {
        self.density.grid_log_values().unwrap_or_default()
    }

    pub fn mean(&self) -> Result<f64> {
        self.density.mean()
    }

    pub fn mass(&self) -> Result<f64> {
        self.density.total_mass()
    }
}

/// Result of [`materialize`]: a normalized grid density and the log of the
/// normalizer that was divided out.
pub(crate) struct Materialized {
    pub density: Density1D,
    pub ln_norm: f64,
}

/// Log of `∫ exp(ln_unnorm)` over `[lo, hi]` together with the subinterval
/// carrying all but a `1e-16` relative sliver of the mass. `None` when the
/// integrand vanishes everywhere.
pub(crate) struct Located {
    pub a: f64,
    pub b: f64,
    pub ln_norm: f64,
}

pub(crate) fn locate<F: Fn(f64) -> f64>(ln_unnorm: F, lo: f64, hi: f64) -> Result<Option<Located>> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(invalid(format!("cannot integrate over [{lo}, {hi}]")));
    }
    let dx = (hi - lo) / (PROBES - 1) as f64;
    let probe_x = |i: usize| if i + 1 == PROBES { hi } else { lo + dx * i as f64 };
    let probes: Vec<f64> = (0..PROBES)
        .map(|i| ln_unnorm(probe_x(i)))
        .map(|v| if v.is_nan() { f64::NEG_INFINITY } else { v })
        .collect();
    let lmax = probes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lmax == f64::NEG_INFINITY {
        return Ok(None);
    }
    if lmax == f64::INFINITY {
        return Err(Error::NonIntegrable("density is unbounded".into()));
    }
    let threshold = lmax - LN_TRUNCATION;
    let first = probes.iter().position(|&v| v >= threshold).unwrap_or(0);
    let last = probes.iter().rposition(|&v| v >= threshold).unwrap_or(PROBES - 1);
    let a = probe_x(first.saturating_sub(1));
    let b = probe_x((last + 1).min(PROBES - 1));

    let shifted = |x: f64| {
        let v = ln_unnorm(x) - lmax;
        if v.is_nan() {
            0.0
        } else {
            v.exp()
        }
    };
    let z = Quadrature::default().integrate(shifted, a, b)?;
    if !(z > 0.0) {
        return Ok(None);
    }
    Ok(Some(Located {
        a,
        b,
        ln_norm: lmax + z.ln(),
    }))
}

/// Normalize `exp(ln_unnorm)` on `[lo, hi]` by adaptive quadrature and
/// tabulate it on `nodes` points over the interval found by [`locate`].
pub(crate) fn materialize<F: Fn(f64) -> f64>(
    ln_unnorm: F,
    lo: f64,
    hi: f64,
    nodes: usize,
) -> Result<Option<Materialized>> {
    let Some(Located { a, b, ln_norm }) = locate(&ln_unnorm, lo, hi)? else {
        return Ok(None);
    };
    let density = Density1D::tabulate(a, b, nodes, |x| ln_unnorm(x) - ln_norm)?.with_norm_const(ln_norm.exp());
    Ok(Some(Materialized { density, ln_norm }))
}

/// Exact law of `X` given `X + Y = h`:
/// `g(x) = f_X(x) f_{Y|X}(h - x; x) / f_H(h)` on `[0, h]`.
pub fn exact_conditional_continuous(joint: &JointLaw, h: f64) -> Result<ConditionalLaw> {
    exact_conditional_continuous_with(joint, h, DEFAULT_NODES)
}

pub fn exact_conditional_continuous_with(joint: &JointLaw, h: f64, nodes: usize) -> Result<ConditionalLaw> {
    let (xlo, xhi) = joint.marginal_x().support();
    if !(h > 0.0 && h.is_finite() && h > xlo) {
        return Err(Error::OutOfSupport {
            x: h,
            lo: xlo,
            hi: f64::INFINITY,
        });
    }
    let fx = joint.marginal_x();
    let lo = xlo.max(0.0);
    let hi = h.min(xhi);
    let m =
        materialize(|x| fx.ln_pdf(x) + joint.ln_conditional(h - x, x), lo, hi, nodes)?.ok_or(Error::ZeroMarginal(h))?;
    Ok(ConditionalLaw::new(m.density, h, 0.0))
}

/// `f_H(h) = ∫ f_X(x) f_{Y|X}(h - x; x) dx`, the density of the sum at `h`.
pub fn sum_density(joint: &JointLaw, h: f64) -> Result<f64> {
    let (xlo, xhi) = joint.marginal_x().support();
    let fx = joint.marginal_x();
    match locate(
        |x| fx.ln_pdf(x) + joint.ln_conditional(h - x, x),
        xlo.max(0.0),
        h.min(xhi),
    )? {
        Some(l) => Ok(l.ln_norm.exp()),
        None => Ok(0.0),
    }
}

/// Law of `X` given `X + Y ∈ (h - δ/2, h + δ/2]`, by an inner quadrature in
/// `y` over the strip at each `x`.
pub fn shell_conditional(joint: &JointLaw, h: f64, delta: f64) -> Result<ConditionalLaw> {
    shell_conditional_with(joint, h, delta, DEFAULT_NODES)
}

pub fn shell_conditional_with(joint: &JointLaw, h: f64, delta: f64, nodes: usize) -> Result<ConditionalLaw> {
    if !(delta > 0.0 && delta.is_finite() && h.is_finite()) {
        return Err(invalid(format!("shell width {delta} at h = {h}")));
    }
    let fx = joint.marginal_x();
    let (xlo, xhi) = fx.support();
    let top = h + 0.5 * delta;
    let lo = xlo.max(0.0);
    let hi = top.min(xhi);
    if !(hi > lo) {
        return Err(Error::EmptyShell { h, delta });
    }
    let inner = Quadrature {
        panels: 4,
        ..Quadrature::default()
    };
    let (ylo, yhi) = joint.bath_support();
    let ln_strip = |x: f64| {
        let lfx = fx.ln_pdf(x);
        if lfx == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let a = (h - x - 0.5 * delta).max(0.0).max(ylo);
        let b = (h - x + 0.5 * delta).min(yhi);
        if !(b > a) {
            return f64::NEG_INFINITY;
        }
        match inner.integrate(|y| joint.ln_conditional(y, x).exp(), a, b) {
            Ok(mass) if mass > 0.0 => lfx + mass.ln(),
            _ => f64::NEG_INFINITY,
        }
    };
    let m = materialize(ln_strip, lo, hi, nodes)?.ok_or(Error::EmptyShell { h, delta })?;
    Ok(ConditionalLaw::new(m.density, h, delta))
}

/// Discrete conditional law of `K` given `K + L = m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteConditional {
    pub pmf: DiscretePmf,
    pub total: u64,
}

/// `p(k | m) = p_K(k) p_{L|K}(m - k; k) / Σ_j p_K(j) p_{L|K}(m - j; j)` on
/// `0..=m`, given `ln p_{L|K}(l; k)` as `ln_l_given_k(l, k)`.
pub fn exact_conditional_discrete<F>(pk: &DiscretePmf, ln_l_given_k: F, m: u64) -> Result<DiscreteConditional>
where
    F: Fn(u64, u64) -> f64,
{
    let lw: Vec<f64> = (0..=m)
        .map(|k| {
            let p = pk.pmf(k as usize);
            if p == 0.0 {
                f64::NEG_INFINITY
            } else {
                p.ln() + ln_l_given_k(m - k, k)
            }
        })
        .collect();
    let pmf = DiscretePmf::from_ln_weights(&lw).map_err(|_| Error::ZeroEvent(m))?;
    Ok(DiscreteConditional { pmf, total: m })
}
