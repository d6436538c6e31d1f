//! Discrete counterpart of the canonical form: the law of a small count `K`
//! given `K + L_n = m` is approximately `Q⁻¹ p_K(k) e^{μ k}`.
//!
//! Submodules hold the two worked settings: particles scattered in space
//! ([`spatial`]) and two bacterial colonies exchanging migrants ([`colony`]).

pub mod colony;
pub mod spatial;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::conditional::{exact_conditional_discrete, DiscreteConditional};
use crate::density::{ln_binomial, ln_poisson, DiscretePmf};
use crate::error::{invalid, Error, Result};

/// `ln p_{L_n | K}(l; k)` for the `n`-th member of the sequence.
pub type LnBathPmfFn = Arc<dyn Fn(u64, u64, u64) -> f64 + Send + Sync>;

/// Law of one of the `n` i.i.d. summands making up `L_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BaseCount {
    Poisson { lambda: f64 },
    Bernoulli { q: f64 },
    Pmf { probs: Vec<f64> },
}

#[derive(Clone)]
pub enum BathModel {
    /// `L_n` is the sum of `n` i.i.d. copies of a base count, independent of `K`.
    IndependentSum(BaseCount),
    /// Caller-supplied `ln p_{L_n|K}(l; k)` as `f(n, l, k)`.
    Coupled(LnBathPmfFn),
}

impl fmt::Debug for BathModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::IndependentSum(b) => f.debug_tuple("IndependentSum").field(b).finish(),
            Self::Coupled(_) => f.write_str("Coupled"),
        }
    }
}

/// Small count `K` and the `n`-indexed bath `L_n`.
#[derive(Debug, Clone)]
pub struct CountingPair {
    pub pk: DiscretePmf,
    pub bath: BathModel,
}

/// Pmf of `L_n` for an independent-sum bath, materialized on `0..=max_l`.
#[derive(Debug, Clone)]
struct SumLaw {
    ln_p: Vec<f64>,
}

impl SumLaw {
    fn ln_pmf(&self, l: u64) -> f64 {
        self.ln_p.get(l as usize).copied().unwrap_or(f64::NEG_INFINITY)
    }
}

impl BaseCount {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Poisson { lambda } if lambda.is_finite() && *lambda > 0.0 => Ok(()),
            Self::Bernoulli { q } if *q > 0.0 && *q < 1.0 => Ok(()),
            Self::Pmf { probs } => DiscretePmf::new(probs.clone()).map(|_| ()),
            other => Err(invalid(format!("base count {other:?}"))),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Poisson { lambda } => *lambda,
            Self::Bernoulli { q } => *q,
            Self::Pmf { probs } => {
                let s: f64 = probs.iter().sum();
                probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum::<f64>() / s
            }
        }
    }

    /// `ln P(L_n = l)` for `l` in `0..=max_l`.
    fn sum_law(&self, n: u64, max_l: u64) -> Result<SumLaw> {
        let ln_p = match self {
            Self::Poisson { lambda } => (0..=max_l).map(|l| ln_poisson(l, n as f64 * lambda)).collect(),
            Self::Bernoulli { q } => (0..=max_l)
                .map(|l| {
                    if l > n {
                        f64::NEG_INFINITY
                    } else {
                        ln_binomial(n, l, *q)
                    }
                })
                .collect(),
            Self::Pmf { probs } => {
                let base = DiscretePmf::new(probs.clone())?;
                let p = convolution_power(base.probs(), n, max_l as usize);
                p.into_iter().map(f64::ln).collect()
            }
        };
        Ok(SumLaw { ln_p })
    }
}

/// `n`-fold convolution of `p`, truncated to `0..=max`.
fn convolution_power(p: &[f64], n: u64, max: usize) -> Vec<f64> {
    let convolve = |a: &[f64], b: &[f64]| {
        let len = (a.len() + b.len() - 1).min(max + 1);
        let mut out = vec![0.0; len];
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 || i >= len {
                continue;
            }
            for (j, &y) in b.iter().enumerate().take(len - i) {
                out[i + j] += x * y;
            }
        }
        out
    };
    let mut result = vec![1.0];
    let mut base: Vec<f64> = p.iter().copied().take(max + 1).collect();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = convolve(&result, &base);
        }
        e >>= 1;
        if e > 0 {
            base = convolve(&base, &base);
        }
    }
    result.resize(max + 1, 0.0);
    result
}

/// Which finite differences produced a `μ` estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// Central difference in `l`; second order.
    Central,
    /// One-sided difference in `l` at an edge of the support; first order.
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub value: f64,
    pub stencil: Stencil,
}

impl CountingPair {
    pub fn independent(pk: DiscretePmf, base: BaseCount) -> Result<Self> {
        base.validate()?;
        Ok(Self {
            pk,
            bath: BathModel::IndependentSum(base),
        })
    }

    pub fn coupled(pk: DiscretePmf, ln_bath: LnBathPmfFn) -> Self {
        Self {
            pk,
            bath: BathModel::Coupled(ln_bath),
        }
    }

    pub fn is_independent(&self) -> bool {
        matches!(self.bath, BathModel::IndependentSum(_))
    }

    /// Returns `ln p_{L_n|K}(·; ·)` as a closure valid for `l ≤ max_l`.
    fn ln_bath(&self, n: u64, max_l: u64) -> Result<Box<dyn Fn(u64, u64) -> f64 + '_>> {
        match &self.bath {
            BathModel::IndependentSum(base) => {
                let law = base.sum_law(n, max_l)?;
                Ok(Box::new(move |l, _k| law.ln_pmf(l)))
            }
            BathModel::Coupled(f) => Ok(Box::new(move |l, k| f(n, l, k))),
        }
    }

    /// `E[K]` and `E[L_n]/n` for each `n`; the counting law needs the first
    /// to stay bounded and the second bounded away from zero and infinity.
    pub fn scaling_check(&self, ns: &[u64]) -> Result<Vec<(u64, f64, f64)>> {
        let ek = self.pk.mean();
        ns.iter()
            .map(|&n| match &self.bath {
                BathModel::IndependentSum(base) => Ok((n, ek, base.mean())),
                BathModel::Coupled(f) => {
                    // E[L_n] under the joint law, truncated where the pmf is negligible.
                    let mut el = 0.0;
                    for (k, &pk) in self.pk.probs().iter().enumerate() {
                        if pk == 0.0 {
                            continue;
                        }
                        let mut s = 0.0;
                        let mut mass = 0.0;
                        let mut l = 0u64;
                        while l < 1000 * n.max(1) {
                            let p = f(n, l, k as u64).exp();
                            s += l as f64 * p;
                            mass += p;
                            if mass > 1.0 - 1e-14 {
                                break;
                            }
                            l += 1;
                        }
                        el += pk * s;
                    }
                    Ok((n, ek, el / n as f64))
                }
            })
            .collect()
    }

    /// Exact conditional law of `K` given `K + L_n = m`.
    pub fn exact_conditional(&self, n: u64, m: u64) -> Result<DiscreteConditional> {
        let ln_bath = self.ln_bath(n, m)?;
        exact_conditional_discrete(&self.pk, ln_bath, m)
    }
}

/// `μ_n` at the total `m = n h`: the unit-lattice difference of
/// `ln p_{L_n|K}(l; k)` in `k` minus the one in `l`, at `(l = m, k = 0)`.
pub fn mu_n(pair: &CountingPair, n: u64, m: u64) -> Result<MuEstimate> {
    let ln_bath = pair.ln_bath(n, m + 1)?;
    let at = |l: u64, k: u64| ln_bath(l, k);
    let centre = at(m, 0);
    if centre == f64::NEG_INFINITY {
        return Err(Error::ZeroMass(format!("p_L(m = {m}) is zero")));
    }
    let up = at(m + 1, 0);
    let down = if m > 0 { at(m - 1, 0) } else { f64::NEG_INFINITY };
    let (dl, stencil) = match (down.is_finite(), up.is_finite()) {
        (true, true) => (0.5 * (up - down), Stencil::Central),
        (true, false) => (centre - down, Stencil::Backward),
        (false, true) => (up - centre, Stencil::Forward),
        (false, false) => {
            return Err(Error::BoundaryEvaluation(format!(
                "p_L is supported only at m = {m}; no slope"
            )))
        }
    };
    let dk = if pair.is_independent() {
        0.0
    } else {
        let d = at(m, 1) - centre;
        if !d.is_finite() {
            return Err(Error::BoundaryEvaluation(format!("p_{{L|K}}(m; 1) is zero at m = {m}")));
        }
        d
    };
    Ok(MuEstimate {
        value: dk - dl,
        stencil,
    })
}

/// `μ_n` at `m = round(n h)`.
pub fn mu_n_at(pair: &CountingPair, h: f64, n: u64) -> Result<MuEstimate> {
    if !(h >= 0.0 && h.is_finite()) {
        return Err(invalid(format!("h = {h}")));
    }
    mu_n(pair, n, (n as f64 * h).round() as u64)
}

fn tilted_ln_weights(pk: &DiscretePmf, mu: f64, m: u64) -> Vec<f64> {
    (0..=m)
        .map(|k| {
            let p = pk.pmf(k as usize);
            if p == 0.0 {
                f64::NEG_INFINITY
            } else {
                p.ln() + mu * k as f64
            }
        })
        .collect()
}

/// `ln Σ_{k=0}^{m} p_K(k) e^{μ k}`, stabilized by log-sum-exp.
pub fn ln_q_n(pk: &DiscretePmf, mu: f64, m: u64) -> f64 {
    let lw = tilted_ln_weights(pk, mu, m);
    let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + lw.iter().map(|l| (l - top).exp()).sum::<f64>().ln()
}

/// `Q_n = Σ_{k=0}^{m} p_K(k) e^{μ k}`; use [`ln_q_n`] when this may overflow.
pub fn q_n(pk: &DiscretePmf, mu: f64, m: u64) -> f64 {
    ln_q_n(pk, mu, m).exp()
}

/// `Q⁻¹ p_K(k) e^{μ k}` on `0..=m`.
pub fn asymptotic_conditional_pmf(pk: &DiscretePmf, mu: f64, m: u64) -> Result<DiscretePmf> {
    if !mu.is_finite() {
        return Err(invalid(format!("μ = {mu}")));
    }
    DiscretePmf::from_ln_weights(&tilted_ln_weights(pk, mu, m))
        .map_err(|_| Error::ZeroMass(format!("p_K has no mass on 0..={m}")))
}

/// Pmf proportional to `1/k!` on `0..=max_k`.
pub fn inverse_factorial_prior(max_k: usize) -> DiscretePmf {
    let lw: Vec<f64> = (0..=max_k as u64).map(|k| -crate::density::ln_factorial(k)).collect();
    DiscretePmf::from_ln_weights(&lw).expect("finite weights")
}
