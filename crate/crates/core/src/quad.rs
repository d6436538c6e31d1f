//! One-dimensional quadrature and root/extremum search.
//!
//! Smooth integrands go through adaptive Simpson with Richardson
//! correction. The interval is first cut into a fixed number of panels so a
//! narrow peak cannot hide between the five initial nodes, and an endpoint
//! where the integrand is not finite is approached through dyadic panels
//! until their contribution is negligible.

use crate::error::{Error, Result};

/// Settings for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    /// Tolerance per unit of integral magnitude (a coarse pre-pass supplies
    /// the magnitude), so rescaling the integrand by a constant rescales the
    /// result without changing any refinement decision.
    pub rel_tol: f64,
    pub max_depth: u32,
    pub panels: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_depth: 50,
            panels: 16,
        }
    }
}

/// Integrate `f` over `[a, b]` with the default settings.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    Quadrature::default().integrate(f, a, b)
}

struct Simpson<'a, F> {
    f: &'a F,
    max_depth: u32,
}

impl<F: Fn(f64) -> f64> Simpson<'_, F> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(&self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = (self.f)(lm);
        let frm = (self.f)(rm);
        let h = b - a;
        let left = h / 12.0 * (fa + 4.0 * flm + fm);
        let right = h / 12.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth >= self.max_depth || delta.abs() <= 15.0 * tol || !delta.is_finite() || h < 1e-300 {
            return left + right + delta / 15.0;
        }
        self.recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)
            + self.recurse(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)
    }

    fn run(&self, a: f64, b: f64, tol: f64) -> f64 {
        let fa = (self.f)(a);
        let fb = (self.f)(b);
        let m = 0.5 * (a + b);
        let fm = (self.f)(m);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        self.recurse(a, b, fa, fm, fb, whole, tol, 0)
    }
}

impl Quadrature {
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::NonIntegrable(format!("infinite interval [{a}, {b}]")));
        }
        if a == b {
            return Ok(0.0);
        }
        if a > b {
            return self.integrate(f, b, a).map(|v| -v);
        }
        let panels = self.panels.max(1);
        let width = (b - a) / panels as f64;
        let edges: Vec<f64> = (0..=panels)
            .map(|i| if i == panels { b } else { a + width * i as f64 })
            .collect();

        let singular_left = !f(a).is_finite();
        let singular_right = !f(b).is_finite();

        // Coarse estimate of |integral| to scale the tolerance.
        let mut rough = 0.0;
        for w in edges.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            for j in 0..8 {
                let x = lo + (hi - lo) * (j as f64 + 0.5) / 8.0;
                let v = f(x);
                if v.is_finite() {
                    rough += v.abs() * (hi - lo) / 8.0;
                }
            }
        }
        let scale = if rough > 0.0 { rough } else { 1.0 };
        let tol = self.rel_tol * scale / panels as f64;

        let simpson = Simpson {
            f: &f,
            max_depth: self.max_depth,
        };
        let mut total = 0.0;
        for (i, w) in edges.windows(2).enumerate() {
            let (lo, hi) = (w[0], w[1]);
            let part = if i == 0 && singular_left {
                dyadic_toward(&simpson, hi, lo, tol)?
            } else if i == panels - 1 && singular_right {
                dyadic_toward(&simpson, lo, hi, tol)?
            } else {
                simpson.run(lo, hi, tol)
            };
            total += part;
        }
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::NonIntegrable(format!("integral over [{a}, {b}] is {total}")))
        }
    }
}

/// Integrate from `from` toward the singular endpoint `to` through panels
/// halving in width. Declares divergence when the panel contributions stop
/// shrinking.
fn dyadic_toward<F: Fn(f64) -> f64>(s: &Simpson<'_, F>, from: f64, to: f64, tol: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut outer = from;
    let mut gap = (from - to).abs();
    let dir = if to < from { -1.0 } else { 1.0 };
    for _ in 0..400 {
        gap *= 0.5;
        let inner = to - dir * gap;
        if inner == outer || gap == 0.0 {
            return Ok(total);
        }
        let (lo, hi) = if inner < outer { (inner, outer) } else { (outer, inner) };
        let part = s.run(lo, hi, tol * 1e-3);
        if !part.is_finite() {
            return Err(Error::NonIntegrable(format!("integrand not finite near {to}")));
        }
        total += part;
        outer = inner;
        if part.abs() <= 1e-15 * total.abs().max(1e-300) {
            return Ok(total);
        }
    }
    Err(Error::NonIntegrable(format!("integral diverges at the endpoint {to}")))
}

/// Trapezoid rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            dx * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Trapezoid weights for `n` uniformly spaced nodes with spacing `dx`.
pub fn trapezoid_weights(n: usize, dx: f64) -> Vec<f64> {
    let mut w = vec![dx; n];
    if n >= 1 {
        w[0] = 0.5 * dx;
        w[n - 1] = 0.5 * dx;
    }
    if n == 1 {
        w[0] = 0.0;
    }
    w
}

/// Golden-section search for the maximizer of a unimodal `f` on `[a, b]`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..500 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Bisection for a sign change of `f` on `[a, b]`, to relative tolerance `rel_tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, rel_tol: f64) -> Option<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() && !fb.is_finite() {
        return None;
    }
    for _ in 0..2000 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= rel_tol * m.abs().max(f64::MIN_POSITIVE) || m == a || m == b {
            return Some(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}
