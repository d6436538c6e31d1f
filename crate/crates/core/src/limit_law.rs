//! Asymptotic canonical form of the conditional law of a small system.
//!
//! For a small variable `X` and a bath `Y`, the law of `X` given
//! `X + Y = h` approaches `Z⁻¹(h) f_X(x) e^{-ψ(h) x}` where `ψ` is the
//! difference of the partial log-derivatives of the bath conditional at
//! `(y = h, x = 0)`. This module builds that form, measures its distance to
//! the exact law along a shrinking sequence, and constructs a family of
//! limits that all share the same vanishing mean.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::conditional::{exact_conditional_continuous, locate, materialize, ConditionalLaw, JointLaw, DEFAULT_NODES};
use crate::density::{kl_divergence, AnalyticFamily, Density1D};
use crate::error::{invalid, Error, Result};
use crate::quad::{self, trapezoid_weights};
use crate::stats::{ols, LinearFit};

/// KL values at or below this are treated as numerically zero in the
/// log-log fit.
pub const KL_FLOOR: f64 = 1e-25;

/// `ψ(h) = ∂_y ln f_{Y|X}(h; 0) − ∂_x ln f_{Y|X}(h; 0)`.
pub fn psi(joint: &JointLaw, h: f64) -> Result<f64> {
    let (lo, hi) = joint.bath_support();
    if !(h > lo && h < hi) {
        return Err(Error::BoundaryEvaluation(format!(
            "h = {h} is not interior to the bath support [{lo}, {hi}]"
        )));
    }
    let dy = joint.d_ln_conditional_dy(h, 0.0).map_err(boundary_from)?;
    if joint.is_independent() {
        return Ok(dy);
    }
    let dx = joint.d_ln_conditional_dx(h, 0.0).map_err(boundary_from)?;
    let v = dy - dx;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::BoundaryEvaluation(format!("ψ is not finite at h = {h}")))
    }
}

fn boundary_from(e: Error) -> Error {
    match e {
        Error::BoundaryEvaluation(_) => e,
        other => Error::BoundaryEvaluation(other.to_string()),
    }
}

/// `ln Z` with `Z = ∫_0^h f_X(x) e^{-ψ x} dx`.
pub fn ln_partition_function(fx: &Density1D, psi: f64, h: f64) -> Result<f64> {
    let (lo, hi) = integration_range(fx, h)?;
    match locate(|x| fx.ln_pdf(x) - psi * x, lo, hi)? {
        Some(l) => Ok(l.ln_norm),
        None => Ok(f64::NEG_INFINITY),
    }
}

/// `Z = ∫_0^h f_X(x) e^{-ψ x} dx`.
pub fn partition_function(fx: &Density1D, psi: f64, h: f64) -> Result<f64> {
    let ln_z = ln_partition_function(fx, psi, h)?;
    let z = ln_z.exp();
    if z.is_finite() {
        Ok(z)
    } else {
        Err(Error::NonIntegrable(format!(
            "partition function overflows (ln Z = {ln_z})"
        )))
    }
}

fn integration_range(fx: &Density1D, h: f64) -> Result<(f64, f64)> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!("h must be positive and finite, got {h}")));
    }
    let (lo, hi) = fx.support();
    let (a, b) = (lo.max(0.0), hi.min(h));
    if !(b > a) {
        return Err(Error::ZeroMass(format!("f_X has no support in [0, {h}]")));
    }
    Ok((a, b))
}

/// The asymptotic law together with the constants that define it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticLaw {
    pub law: ConditionalLaw,
    pub psi: f64,
    pub ln_z: f64,
}

impl AsymptoticLaw {
    /// Log-density of the closed form at any point of `[0, h]`, evaluated
    /// directly rather than interpolated from the grid.
    pub fn ln_pdf_exact(&self, fx: &Density1D, x: f64) -> f64 {
        if x < 0.0 || x > self.law.h {
            return f64::NEG_INFINITY;
        }
        fx.ln_pdf(x) - self.psi * x - self.ln_z
    }
}

/// `Z⁻¹ f_X(x) e^{-ψ(h) x}` on `[0, h]`, with `ψ` taken from `joint`.
pub fn asymptotic_conditional(fx: &Density1D, joint: &JointLaw, h: f64) -> Result<ConditionalLaw> {
    asymptotic_law(fx, joint, h).map(|a| a.law)
}

pub fn asymptotic_law(fx: &Density1D, joint: &JointLaw, h: f64) -> Result<AsymptoticLaw> {
    let psi = psi(joint, h)?;
    tilted_law(fx, psi, h)
}

/// `Z⁻¹ f_X(x) e^{-ψ x}` on `[0, h]` for a given exponent.
pub fn tilted_law(fx: &Density1D, psi: f64, h: f64) -> Result<AsymptoticLaw> {
    let (lo, hi) = integration_range(fx, h)?;
    let m = materialize(|x| fx.ln_pdf(x) - psi * x, lo, hi, DEFAULT_NODES)?
        .ok_or_else(|| Error::ZeroMass(format!("f_X e^(-ψx) vanishes on [0, {h}]")))?;
    Ok(AsymptoticLaw {
        law: ConditionalLaw::new(m.density, h, 0.0),
        psi,
        ln_z: m.ln_norm,
    })
}

/// Builds the `n`-th member of a shrinking sequence of joint laws.
pub type SequenceFn = Arc<dyn Fn(u64) -> Result<JointLaw> + Send + Sync>;

#[derive(Clone)]
pub enum Scaling {
    /// `X_n = X / n` with the bath conditional seeing `n X_n`.
    DivideByN,
    Custom(SequenceFn),
}

impl fmt::Debug for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DivideByN => f.write_str("DivideByN"),
            Self::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// A base joint law and the `n` values at which to shrink it.
#[derive(Debug, Clone)]
pub struct SmallSystemSequence {
    pub base: JointLaw,
    pub scaling: Scaling,
    pub ns: Vec<u64>,
}

impl SmallSystemSequence {
    pub fn divide_by_n(base: JointLaw, ns: Vec<u64>) -> Result<Self> {
        let s = Self {
            base,
            scaling: Scaling::DivideByN,
            ns,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn custom(base: JointLaw, family: SequenceFn, ns: Vec<u64>) -> Result<Self> {
        let s = Self {
            base,
            scaling: Scaling::Custom(family),
            ns,
        };
        s.validate()?;
        Ok(s)
    }

    /// At least four distinct positive `n` spanning two decades.
    pub fn validate(&self) -> Result<()> {
        let mut ns = self.ns.clone();
        ns.sort_unstable();
        ns.dedup();
        if ns.len() < 4 || ns.len() != self.ns.len() {
            return Err(invalid("convergence study needs at least four distinct n values"));
        }
        if ns[0] == 0 {
            return Err(invalid("n values must be positive"));
        }
        if (ns[ns.len() - 1] as f64) < 100.0 * ns[0] as f64 {
            return Err(invalid("n values must span at least two decades"));
        }
        Ok(())
    }

    pub fn member(&self, n: u64) -> Result<JointLaw> {
        match &self.scaling {
            Scaling::DivideByN => self.base.scaled_down(n as f64),
            Scaling::Custom(f) => f(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub kl: f64,
    pub psi: f64,
    /// `E[X_n]` under the marginal.
    pub mean_x: f64,
    /// The KL fell to the numerical floor and was replaced by [`KL_FLOOR`] in the fit.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub h: f64,
    pub rows: Vec<ConvergenceRow>,
    pub fit: LinearFit,
}

/// JSON summary of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub r_squared: f64,
    pub strictly_decreasing: bool,
    pub any_degenerate: bool,
}

impl ConvergenceReport {
    pub fn slope(&self) -> f64 {
        self.fit.slope
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].kl < w[0].kl)
    }

    pub fn summary(&self) -> ConvergenceSummary {
        ConvergenceSummary {
            slope: self.fit.slope,
            intercept: self.fit.intercept,
            residual: self.fit.residual_norm,
            r_squared: self.fit.r_squared,
            strictly_decreasing: self.is_strictly_decreasing(),
            any_degenerate: self.rows.iter().any(|r| r.degenerate),
        }
    }

    /// Columns `n,kl`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,kl\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.16e}\n", r.n, r.kl));
        }
        out
    }
}

/// KL(exact ‖ asymptotic) evaluated on the exact law's grid. Both laws are
/// renormalized under the trapezoid weights so quadrature error in either
/// normalizer cancels.
pub fn kl_on_grid(exact: &ConditionalLaw, ln_asymptotic: impl Fn(f64) -> f64) -> Result<f64> {
    let nodes = exact.nodes();
    let lv = exact.log_values();
    if nodes.len() < 2 {
        return Err(invalid("exact law must be tabulated"));
    }
    let w = trapezoid_weights(nodes.len(), nodes[1] - nodes[0]);
    let lmax = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let p: Vec<f64> = lv.iter().zip(&w).map(|(l, w)| w * (l - lmax).exp()).collect();
    let total: f64 = p.iter().sum();
    let mut first = 0.0;
    let mut second = 0.0;
    for ((x, l), pi) in nodes.iter().zip(&lv).zip(&p) {
        if *pi == 0.0 {
            continue;
        }
        let la = ln_asymptotic(*x);
        if la == f64::NEG_INFINITY {
            return Err(Error::SupportMismatch(*x));
        }
        let d = l - la;
        let pn = pi / total;
        first += pn * d;
        second += pn * (-d).exp_m1();
    }
    Ok(first + second.ln_1p())
}

/// KL(exact ‖ asymptotic) for each `n` and a least-squares fit of
/// `ln KL = s ln n + c`.
pub fn convergence_study(seq: &SmallSystemSequence, h: f64) -> Result<ConvergenceReport> {
    seq.validate()?;
    let mut ns = seq.ns.clone();
    ns.sort_unstable();
    let rows: Vec<ConvergenceRow> = ns
        .par_iter()
        .map(|&n| {
            let joint = seq.member(n)?;
            let fx = joint.marginal_x();
            let exact = exact_conditional_continuous(&joint, h)?;
            let asym = asymptotic_law(fx, &joint, h)?;
            let kl = kl_on_grid(&exact, |x| asym.ln_pdf_exact(fx, x))?;
            Ok(ConvergenceRow {
                n,
                kl,
                psi: asym.psi,
                mean_x: fx.mean()?,
                degenerate: kl <= KL_FLOOR,
            })
        })
        .collect::<Result<_>>()?;
    let lx: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.kl.max(KL_FLOOR).ln()).collect();
    let fit = ols(&lx, &ly)?;
    Ok(ConvergenceReport { h, rows, fit })
}

/// `f(x) = n Ω(n x) e^{-n β x}` with `Ω(x) = c₁ x^γ`, normalized so that
/// `∫Ω e^{-βx} = ∫ x Ω e^{-βx} = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleFamily {
    pub gamma: f64,
    pub c1: f64,
    pub beta: f64,
    pub n: u64,
    /// `∫ Ω(x) e^{-βx} dx`, by quadrature.
    pub mass_constraint: f64,
    /// `∫ x Ω(x) e^{-βx} dx`, by quadrature.
    pub mean_constraint: f64,
    /// `E[X^{(n)}]`, by quadrature.
    pub mean: f64,
}

impl CounterexampleFamily {
    pub fn omega(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            self.c1 * x.powf(self.gamma)
        }
    }

    /// The density of `X^{(n)}`, a Gamma law in closed form.
    pub fn density(&self) -> Result<Density1D> {
        Density1D::family(AnalyticFamily::Gamma {
            shape: self.gamma + 1.0,
            scale: 1.0 / (self.n as f64 * self.beta),
        })
    }
}

/// Solve for `(c₁, β)` given `γ`, or for `(c₁, γ)` given `β`. Both may be
/// supplied if they agree.
pub fn construct_counterexample(gamma: Option<f64>, beta: Option<f64>, n: u64) -> Result<CounterexampleFamily> {
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    let gamma = match (gamma, beta) {
        (Some(g), None) => g,
        (None, Some(b)) => b - 1.0,
        (Some(g), Some(b)) => {
            if (b - (g + 1.0)).abs() > 1e-12 * b.abs().max(1.0) {
                return Err(Error::NoSolution(format!(
                    "both constraints force β = γ + 1 = {}, but β = {b} was requested",
                    g + 1.0
                )));
            }
            g
        }
        (None, None) => return Err(invalid("supply γ, β, or both")),
    };
    if !(gamma.is_finite() && gamma > -1.0) {
        return Err(Error::NoSolution(format!(
            "∫ x^γ e^(-βx) dx diverges at 0 for γ = {gamma}"
        )));
    }
    let beta = gamma + 1.0;
    let c1 = (beta * beta.ln() - ln_gamma(beta)).exp();

    let omega = |x: f64| c1 * x.powf(gamma) * (-beta * x).exp();
    let upper = (beta + 80.0 + 10.0 * beta.sqrt()) / beta;
    let mass_constraint = quad::integrate(omega, 0.0, upper)?;
    let mean_constraint = quad::integrate(|x| x * omega(x), 0.0, upper)?;
    let nf = n as f64;
    let mean = quad::integrate(|x| x * nf * omega(nf * x), 0.0, upper / nf)?;
    Ok(CounterexampleFamily {
        gamma,
        c1,
        beta,
        n,
        mass_constraint,
        mean_constraint,
        mean,
    })
}

/// KL between two counterexample densities.
pub fn counterexample_kl(a: &CounterexampleFamily, b: &CounterexampleFamily) -> Result<f64> {
    kl_divergence(&a.density()?, &b.density()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditional::exact_conditional_continuous;
    use approx::assert_abs_diff_eq;

    fn gamma(k: f64, theta: f64) -> Density1D {
        Density1D::family(AnalyticFamily::Gamma { shape: k, scale: theta }).unwrap()
    }

    fn exp(rate: f64) -> Density1D {
        Density1D::family(AnalyticFamily::Exponential { rate }).unwrap()
    }

    #[test]
    fn psi_examples() {
        let j = JointLaw::independent(gamma(2.0, 1.0), gamma(3.0, 1.0));
        assert_eq!(psi(&j, 2.0).unwrap(), 0.0);
        for h in [0.1, 1.0, 7.5] {
            let j = JointLaw::independent(gamma(2.0, 1.0), exp(1.7));
            assert_eq!(psi(&j, h).unwrap(), -1.7);
        }
    }

    #[test]
    fn psi_additive_shift_chain_rule() {
        let c = 0.5;
        let j = JointLaw::additive_shift(gamma(2.0, 1.0), gamma(3.0, 1.0), c).unwrap();
        assert_abs_diff_eq!(psi(&j, 2.0).unwrap(), 0.0, epsilon = 1e-14);
        // Away from the stationary point the chain rule gives (1 + c) g'(h).
        let h = 1.3;
        let g = (3.0 - 1.0) / h - 1.0;
        assert_abs_diff_eq!(psi(&j, h).unwrap(), (1.0 + c) * g, epsilon = 1e-12);
        let e = 1e-5;
        let fd_y = (j.ln_conditional(h + e, 0.0) - j.ln_conditional(h - e, 0.0)) / (2.0 * e);
        let fd_x = (j.ln_conditional(h, e) - j.ln_conditional(h, 0.0)) / e;
        assert_abs_diff_eq!(psi(&j, h).unwrap(), fd_y - fd_x, epsilon = 1e-4);
    }

    #[test]
    fn psi_rejects_support_endpoints() {
        let bath = Density1D::family(AnalyticFamily::Uniform { lo: 1.0, hi: 3.0 }).unwrap();
        let j = JointLaw::independent(exp(1.0), bath);
        assert!(matches!(psi(&j, 1.0), Err(Error::BoundaryEvaluation(_))));
        assert!(matches!(psi(&j, 3.0), Err(Error::BoundaryEvaluation(_))));
        let j = JointLaw::independent(exp(1.0), exp(1.0));
        assert!(matches!(psi(&j, 0.0), Err(Error::BoundaryEvaluation(_))));
    }

    #[test]
    fn psi_expert_matches_closed_form() {
        let bath = gamma(3.0, 1.0);
        let b2 = bath.clone();
        let j = JointLaw::expert(gamma(2.0, 1.0), Arc::new(move |y, x| b2.ln_pdf(y - 0.5 * x)));
        let closed = JointLaw::additive_shift(gamma(2.0, 1.0), bath, 0.5).unwrap();
        assert_abs_diff_eq!(psi(&j, 1.3).unwrap(), psi(&closed, 1.3).unwrap(), epsilon = 1e-7);
    }

    #[test]
    fn partition_function_examples() {
        let u = Density1D::family(AnalyticFamily::Uniform { lo: 0.0, hi: 1.0 }).unwrap();
        assert_abs_diff_eq!(partition_function(&u, 0.0, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        let z = partition_function(&exp(1.0), 1.0, 2.0).unwrap();
        assert_abs_diff_eq!(z, (1.0 - (-4f64).exp()) / 2.0, epsilon = 1e-12);

        // Gamma(2,1), ψ = 0.5, h = 3 against a fine midpoint sum.
        let z = partition_function(&gamma(2.0, 1.0), 0.5, 3.0).unwrap();
        let m = 300_000;
        let dx = 3.0 / m as f64;
        let oracle: f64 = (0..m)
            .map(|i| {
                let x = (i as f64 + 0.5) * dx;
                x * (-1.5 * x).exp() * dx
            })
            .sum();
        assert_abs_diff_eq!(z, oracle, epsilon = 1e-9);
    }

    #[test]
    fn asymptotic_is_exact_for_memoryless_bath() {
        let fx = gamma(2.0, 1.0);
        let j = JointLaw::independent(fx.clone(), exp(1.0));
        let exact = exact_conditional_continuous(&j, 2.0).unwrap();
        let asym = asymptotic_law(&fx, &j, 2.0).unwrap();
        let kl = kl_on_grid(&exact, |x| asym.ln_pdf_exact(&fx, x)).unwrap();
        assert!(kl.abs() < 1e-12, "kl {kl}");
    }

    #[test]
    fn asymptotic_against_exact_at_n50() {
        let base = JointLaw::independent(gamma(2.0, 1.0), gamma(3.0, 1.0));
        let j = base.scaled_down(50.0).unwrap();
        let fx = j.marginal_x().clone();
        let asym = asymptotic_law(&fx, &j, 2.0).unwrap();
        assert_eq!(asym.psi, 0.0);
        let exact = exact_conditional_continuous(&j, 2.0).unwrap();
        let kl = kl_on_grid(&exact, |x| asym.ln_pdf_exact(&fx, x)).unwrap();
        assert!(kl < 0.05, "kl {kl}");
    }

    #[test]
    fn flat_bath_slope_returns_truncated_marginal() {
        let fx = gamma(2.0, 1.0);
        let a = tilted_law(&fx, 0.0, 2.0).unwrap();
        let z = 1.0 - 3.0 * (-2f64).exp();
        for x in [0.1, 0.9, 1.9] {
            assert_abs_diff_eq!(a.law.pdf(x), fx.pdf(x) / z, epsilon = 1e-9);
        }
    }

    #[test]
    fn locally_exponential_bath_recovers_its_slope() {
        // A smooth bump centred on h times e^{βy}: the bump's log-slope
        // vanishes at its centre, leaving β.
        let (h, beta) = (5.0, 0.7);
        let bath = Density1D::tabulate(0.0, 10.0, 4001, |y| {
            let u = (y - h) / 2.0;
            if u.abs() >= 1.0 {
                f64::NEG_INFINITY
            } else {
                -1.0 / (1.0 - u * u) + beta * y
            }
        })
        .unwrap();
        let j = JointLaw::independent(exp(1.0), bath);
        assert_abs_diff_eq!(psi(&j, h).unwrap(), beta, epsilon = 1e-6);
    }

    #[test]
    fn log_ratio_is_linear_with_slope_minus_psi() {
        let fx = gamma(2.0, 1.0);
        let j = JointLaw::independent(fx.clone(), gamma(5.0, 1.0));
        let h = 3.0;
        let law = asymptotic_conditional(&fx, &j, h).unwrap();
        let (xs, ys): (Vec<f64>, Vec<f64>) = law
            .nodes()
            .into_iter()
            .zip(law.log_values())
            .filter(|(x, _)| *x > 0.0)
            .map(|(x, l)| (x, l - fx.ln_pdf(x)))
            .unzip();
        let fit = ols(&xs, &ys).unwrap();
        assert!(fit.r_squared > 1.0 - 1e-10);
        assert_abs_diff_eq!(fit.slope, -(4.0 / h - 1.0), epsilon = 1e-9);
    }

    #[test]
    fn convergence_rate_example() {
        let base = JointLaw::independent(exp(1.0), gamma(5.0, 1.0));
        let seq = SmallSystemSequence::divide_by_n(base, vec![10, 30, 100, 300, 1000]).unwrap();
        let r = convergence_study(&seq, 4.0).unwrap();
        assert!(r.is_strictly_decreasing(), "{:?}", r.rows);
        assert!(r.slope() <= -2.0 / 3.0 + 0.2);
        let psi0 = r.rows[0].psi;
        for row in &r.rows {
            assert!((row.psi - psi0).abs() <= 1e-12);
            assert!(row.kl >= -1e-12);
            assert_abs_diff_eq!(row.mean_x * row.n as f64, 1.0, epsilon = 1e-6);
        }
        // Leading-order behaviour: d ≈ -x²/8 under Exp(n) gives KL ≈ (5/32) n⁻⁴.
        let kl = r.rows[4].kl;
        assert!((kl / (5.0 / 32.0 * 1e-12) - 1.0).abs() < 0.05, "kl {kl}");
    }

    #[test]
    fn sequence_validation() {
        let base = JointLaw::independent(exp(1.0), gamma(5.0, 1.0));
        assert!(SmallSystemSequence::divide_by_n(base.clone(), vec![10, 30, 100]).is_err());
        assert!(SmallSystemSequence::divide_by_n(base.clone(), vec![10, 20, 30, 40]).is_err());
        assert!(SmallSystemSequence::divide_by_n(base, vec![10, 10, 100, 1000]).is_err());
    }

    #[test]
    fn counterexample_examples() {
        let c = construct_counterexample(Some(1.0), None, 1).unwrap();
        assert_abs_diff_eq!(c.beta, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.c1, 4.0, epsilon = 1e-12);
        let c = construct_counterexample(Some(0.0), None, 7).unwrap();
        assert_abs_diff_eq!(c.beta, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.c1, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.mean, 1.0 / 7.0, epsilon = 1e-8);
        assert_abs_diff_eq!(c.density().unwrap().pdf(0.3), 7.0 * (-2.1f64).exp(), epsilon = 1e-12);

        for g in [-0.5, 0.0, 1.0, 2.5] {
            let c = construct_counterexample(Some(g), None, 20).unwrap();
            assert_abs_diff_eq!(c.mass_constraint, 1.0, epsilon = 1e-8);
            assert_abs_diff_eq!(c.mean_constraint, 1.0, epsilon = 1e-8);
            assert_abs_diff_eq!(c.mean, 1.0 / 20.0, epsilon = 1e-8);
        }

        let a = construct_counterexample(Some(0.0), None, 50).unwrap();
        let b = construct_counterexample(Some(1.0), None, 50).unwrap();
        let kl = counterexample_kl(&a, &b).unwrap();
        // E_f[x − ln 4 − ln x] under Exp(1) is 1 − ln 4 + Euler's constant.
        assert_abs_diff_eq!(kl, 1.0 - 4f64.ln() + 0.577_215_664_901_532_9, epsilon = 1e-7);
        assert!(kl > 0.1);
    }

    #[test]
    fn counterexample_infeasible() {
        assert!(matches!(
            construct_counterexample(Some(-1.0), None, 1),
            Err(Error::NoSolution(_))
        ));
        assert!(matches!(
            construct_counterexample(Some(1.0), Some(3.0), 1),
            Err(Error::NoSolution(_))
        ));
        let c = construct_counterexample(None, Some(3.0), 1).unwrap();
        assert_abs_diff_eq!(c.gamma, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn report_csv_and_summary() {
        let base = JointLaw::independent(exp(1.0), gamma(5.0, 1.0));
        let seq = SmallSystemSequence::divide_by_n(base, vec![10, 30, 100, 1000]).unwrap();
        let r = convergence_study(&seq, 4.0).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("n,kl\n10,"));
        assert_eq!(csv.lines().count(), 5);
        let s = serde_json::to_value(r.summary()).unwrap();
        assert!(s["slope"].is_number() && s["intercept"].is_number() && s["residual"].is_number());
    }
}
