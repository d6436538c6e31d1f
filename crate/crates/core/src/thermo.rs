//! Thermodynamic corollaries of the limit law: the free energy as a Legendre
//! transform of an extensive entropy, variance bounds on the fluctuating
//! inverse temperature, and the lower bound on a divergence from a
//! non-normalized reference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{kl_divergence, neg_log_norm, Density1D};
use crate::error::{invalid, Error, Result};
use crate::quad::{self, Quadrature};
use crate::serde_ext;

/// Intensive entropy density `s(e)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntropyDensity {
    /// `s(e) = c ln e`.
    LogEnergy { c: f64 },
    /// `s(e) = e - e ln e`.
    Mixing,
    /// `s(e) = 0`; its slope never equals a positive `β`.
    Flat,
}

impl EntropyDensity {
    pub fn value(&self, e: f64) -> f64 {
        match *self {
            Self::LogEnergy { c } => c * e.ln(),
            Self::Mixing => {
                if e == 0.0 {
                    0.0
                } else {
                    e - e * e.ln()
                }
            }
            Self::Flat => 0.0,
        }
    }

    pub fn slope(&self, e: f64) -> f64 {
        match *self {
            Self::LogEnergy { c } => c / e,
            Self::Mixing => -e.ln(),
            Self::Flat => 0.0,
        }
    }
}

/// Extensive entropy `S(x) = V s(x/V) + offset` on `x ∈ (0, V e_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtensiveEntropy {
    pub density: EntropyDensity,
    pub volume: f64,
    /// Upper end of the intensive range; `None` leaves it unbounded.
    #[serde(default)]
    pub e_max: Option<f64>,
    #[serde(default)]
    pub offset: f64,
}

impl ExtensiveEntropy {
    pub fn new(density: EntropyDensity, volume: f64) -> Result<Self> {
        let s = Self {
            density,
            volume,
            e_max: None,
            offset: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn log_energy(c: f64, volume: f64) -> Result<Self> {
        Self::new(EntropyDensity::LogEnergy { c }, volume)
    }

    pub fn mixing(volume: f64) -> Result<Self> {
        Self::new(EntropyDensity::Mixing, volume)
    }

    pub fn flat(volume: f64) -> Result<Self> {
        Self::new(EntropyDensity::Flat, volume)
    }

    pub fn with_e_max(mut self, e_max: f64) -> Result<Self> {
        self.e_max = Some(e_max);
        self.validate()?;
        Ok(self)
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.volume > 0.0 && self.volume.is_finite()) {
            return Err(invalid(format!("volume must be positive, got {}", self.volume)));
        }
        if let Some(e) = self.e_max {
            if !(e > 0.0) {
                return Err(invalid(format!("e_max must be positive, got {e}")));
            }
        }
        if let EntropyDensity::LogEnergy { c } = self.density {
            if !(c > 0.0 && c.is_finite()) {
                return Err(invalid(format!("entropy coefficient must be positive, got {c}")));
            }
        }
        if !self.offset.is_finite() {
            return Err(invalid("entropy offset must be finite"));
        }
        Ok(())
    }

    pub fn e_max(&self) -> f64 {
        self.e_max.unwrap_or(f64::INFINITY)
    }

    /// `S(x)`.
    pub fn entropy(&self, x: f64) -> f64 {
        self.volume * self.density.value(x / self.volume) + self.offset
    }

    /// `dS/dE = s'(x/V)`.
    pub fn slope(&self, x: f64) -> f64 {
        self.density.slope(x / self.volume)
    }

    /// Second differences of `s` on a geometric grid over the intensive
    /// range must not exceed `1e-8`.
    pub fn check_concavity(&self) -> Result<()> {
        let hi = self.e_max().min(1e6);
        let lo = 1e-6f64.min(hi * 1e-3);
        let steps = 400;
        for i in 1..steps {
            let e = lo * (hi / lo).powf(i as f64 / steps as f64);
            let step = 1e-3 * e;
            let d2 = self.density.value(e + step) - 2.0 * self.density.value(e) + self.density.value(e - step);
            if d2 > 1e-8 {
                return Err(invalid(format!(
                    "entropy density is not concave near e = {e}: second difference {d2}"
                )));
            }
        }
        Ok(())
    }
}

/// Root of `dS/dE = β`, found by bisection to relative tolerance `1e-12`.
pub fn stationary_energy(s: &ExtensiveEntropy, beta: f64) -> Result<f64> {
    s.validate()?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid(format!("beta must be positive, got {beta}")));
    }
    let v = s.volume;
    let g = |x: f64| s.slope(x) - beta;
    let lo = 1e-12 * v;
    if !(g(lo) > 0.0) {
        return Err(Error::NoStationaryPoint { beta });
    }
    let hi = match s.e_max {
        Some(e) => e * v,
        None => {
            let mut b = v;
            while g(b) >= 0.0 {
                b *= 2.0;
                if b > 1e300 {
                    return Err(Error::NoStationaryPoint { beta });
                }
            }
            b
        }
    };
    // The root must lie strictly inside the range; a slope equal to β only
    // at `e_max` is the edge of the range, not a stationary point.
    if !(g(hi) < 0.0) {
        return Err(Error::NoStationaryPoint { beta });
    }
    quad::bisect(g, lo, hi, 1e-12).ok_or(Error::NoStationaryPoint { beta })
}

/// `E* - β⁻¹ S(E*)` at the root of `dS/dE = β`.
pub fn free_energy_legendre(s: &ExtensiveEntropy, beta: f64) -> Result<f64> {
    let e = stationary_energy(s, beta)?;
    Ok(e - s.entropy(e) / beta)
}

/// Upper limit used when none is given: `10 E*`, capped at `V e_max`. Without
/// a stationary point the integrand peaks at the origin and decays at rate
/// `β` at least, so `50/β` is used instead.
pub fn default_upper_limit(s: &ExtensiveEntropy, beta: f64) -> Result<f64> {
    let h = match stationary_energy(s, beta) {
        Ok(e) => 10.0 * e,
        Err(Error::NoStationaryPoint { .. }) => 50.0 / beta,
        Err(e) => return Err(e),
    };
    Ok(h.min(s.e_max() * s.volume))
}

/// `-β⁻¹ ln ∫_0^h e^{S(x) - βx} dx`. The integrand's maximum is located by
/// golden-section search and factored out, and the integral is split at the
/// maximizer.
pub fn free_energy_exact(s: &ExtensiveEntropy, beta: f64, h: Option<f64>) -> Result<f64> {
    s.validate()?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid(format!("beta must be positive, got {beta}")));
    }
    let h = match h {
        Some(h) => h,
        None => default_upper_limit(s, beta)?,
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!("upper limit must be positive and finite, got {h}")));
    }
    if h > s.e_max() * s.volume * (1.0 + 1e-12) {
        return Err(invalid(format!("upper limit {h} exceeds V e_max")));
    }
    let phi = |x: f64| s.entropy(x) - beta * x;
    let x_star = quad::golden_section_max(phi, 0.0, h, 1e-12 * s.volume);
    let peak = [phi(x_star), phi(0.0), phi(h)]
        .into_iter()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::NonIntegrable("integrand has no finite value".into()));
    }
    let integrand = |x: f64| (phi(x) - peak).exp();
    let q = Quadrature {
        panels: 64,
        ..Quadrature::default()
    };
    let total = q.integrate(integrand, 0.0, x_star)? + q.integrate(integrand, x_star, h)?;
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NonIntegrable(format!("shifted partition integral {total}")));
    }
    Ok(-(peak + total.ln()) / beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyReport {
    pub beta: f64,
    pub volume: f64,
    pub f_exact: f64,
    pub f_legendre: f64,
    pub gap: f64,
    pub gap_per_volume: f64,
    pub e_star: f64,
    pub h: f64,
}

/// Both free energies at one `(S, β)`, integrating to the default limit.
pub fn free_energy_report(s: &ExtensiveEntropy, beta: f64) -> Result<FreeEnergyReport> {
    let e_star = stationary_energy(s, beta)?;
    let h = default_upper_limit(s, beta)?;
    let f_exact = free_energy_exact(s, beta, Some(h))?;
    let f_legendre = e_star - s.entropy(e_star) / beta;
    let gap = (f_exact - f_legendre).abs();
    Ok(FreeEnergyReport {
        beta,
        volume: s.volume,
        f_exact,
        f_legendre,
        gap,
        gap_per_volume: gap / s.volume,
        e_star,
        h,
    })
}

/// Reports for the same entropy density at each volume, in input order.
pub fn volume_sweep(s: &ExtensiveEntropy, beta: f64, volumes: &[f64]) -> Result<Vec<FreeEnergyReport>> {
    volumes
        .par_iter()
        .map(|&v| {
            let mut sv = *s;
            sv.volume = v;
            free_energy_report(&sv, beta)
        })
        .collect()
}

/// Whether the gap per volume decreases along the sweep, up to `1e-12`.
pub fn gap_per_volume_decreasing(reports: &[FreeEnergyReport]) -> bool {
    reports
        .windows(2)
        .all(|w| w[1].volume > w[0].volume && w[1].gap_per_volume <= w[0].gap_per_volume + 1e-12)
}

pub fn sweep_to_csv(reports: &[FreeEnergyReport]) -> String {
    let mut out = String::from("V,F_exact,F_legendre,gap,gap_per_V\n");
    for r in reports {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.volume, r.f_exact, r.f_legendre, r.gap, r.gap_per_volume
        ));
    }
    out
}

/// Moments of `Y` and of `β(Y) = d ln f_Y/dy`, with the two variance bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationReport {
    pub mean_y: f64,
    pub var_y: f64,
    pub second_moment_y: f64,
    pub mean_beta: f64,
    /// Infinite when `E[β²]` diverges at the origin.
    #[serde(with = "serde_ext::float")]
    pub var_beta: f64,
    #[serde(with = "serde_ext::float")]
    pub second_moment_beta: f64,
    pub f_at_zero: f64,
    /// `var[Y] var[β(Y)]`.
    #[serde(with = "serde_ext::float")]
    pub lhs: f64,
    /// `(1 - f_Y(0) E[Y])²`.
    pub rhs: f64,
    #[serde(with = "serde_ext::float")]
    pub margin: f64,
    /// `E[Y²] E[β²(Y)]`, bounded below by one.
    #[serde(with = "serde_ext::float")]
    pub second_product: f64,
    pub first_bound_holds: bool,
    pub second_bound_holds: bool,
}

/// Evaluate both variance bounds for `f_Y`. A divergent `E[β²]` is reported
/// as `+∞`, which satisfies both bounds trivially.
pub fn fluctuation_bounds(fy: &Density1D) -> Result<FluctuationReport> {
    let f_at_zero = fy.pdf(0.0);
    if !f_at_zero.is_finite() {
        return Err(Error::UndefinedAtZero);
    }
    let f = fy.normalize()?;
    let f_at_zero = f.pdf(0.0);
    if !f_at_zero.is_finite() {
        return Err(Error::UndefinedAtZero);
    }
    let (lo, hi) = f.support();
    let is_grid = f.grid_nodes().is_some();
    let beta = |x: f64| -> f64 {
        if is_grid && (x <= lo || x >= hi) {
            return 0.0;
        }
        f.log_density_derivative(x).unwrap_or(f64::NAN)
    };
    let weight = |l: f64| if l == f64::NEG_INFINITY { 0.0 } else { l.exp() };

    let mean_y = f.moment(1)?;
    let second_moment_y = f.moment(2)?;
    let var_y = second_moment_y - mean_y * mean_y;
    let mean_beta = f.integrate_with(|x, l| weight(l) * beta(x))?;
    let second_moment_beta = match f.integrate_with(|x, l| weight(l) * beta(x).powi(2)) {
        Ok(v) => v,
        Err(Error::NonIntegrable(_)) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let var_beta = if second_moment_beta.is_finite() {
        (second_moment_beta - mean_beta * mean_beta).max(0.0)
    } else {
        f64::INFINITY
    };
    let lhs = var_y * var_beta;
    let rhs = (1.0 - f_at_zero * mean_y).powi(2);
    let second_product = second_moment_y * second_moment_beta;
    Ok(FluctuationReport {
        mean_y,
        var_y,
        second_moment_y,
        mean_beta,
        var_beta,
        second_moment_beta,
        f_at_zero,
        lhs,
        rhs,
        margin: lhs - rhs,
        second_product,
        first_bound_holds: lhs >= rhs - 1e-9,
        second_bound_holds: second_product >= 1.0 - 1e-9,
    })
}

/// `∫ f ln(f/g̃) ≥ -ln ∫ g̃`, with the slack between the two sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlBoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// `KL(f ‖ g̃/∫g̃)`, which the slack equals identically.
    pub kl_to_normalized: f64,
    pub holds: bool,
}

pub fn kl_lower_bound_check(f: &Density1D, g_tilde: &Density1D) -> Result<KlBoundReport> {
    let lhs = kl_divergence(f, g_tilde)?;
    let rhs = neg_log_norm(g_tilde)?;
    let kl_to_normalized = kl_divergence(f, &g_tilde.normalize()?)?;
    let slack = lhs - rhs;
    Ok(KlBoundReport {
        lhs,
        rhs,
        slack,
        kl_to_normalized,
        holds: slack >= -1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::AnalyticFamily;
    use crate::rng::CounterRng;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use statrs::function::gamma::ln_gamma;

    /// Closed form for `S = cV ln(x/V)` integrated over the half line.
    fn log_energy_exact(c: f64, v: f64, beta: f64) -> f64 {
        let a = c * v;
        -(ln_gamma(a + 1.0) - a * v.ln() - (a + 1.0) * beta.ln()) / beta
    }

    #[test]
    fn flat_entropy_gives_log_beta() {
        for beta in [0.3, 1.0, 2.5] {
            let s = ExtensiveEntropy::flat(1.0).unwrap();
            let f = free_energy_exact(&s, beta, Some(200.0 / beta)).unwrap();
            assert_abs_diff_eq!(f, beta.ln() / beta, epsilon = 1e-10);
        }
    }

    #[test]
    fn log_energy_unit_volume_is_gamma_integral() {
        for beta in [0.5, 1.0, 3.0] {
            let s = ExtensiveEntropy::log_energy(1.0, 1.0).unwrap();
            let f = free_energy_exact(&s, beta, Some(200.0 / beta)).unwrap();
            assert_abs_diff_eq!(f, 2.0 * beta.ln() / beta, epsilon = 1e-10);
        }
    }

    #[test]
    fn three_halves_log_energy_matches_fine_midpoint_rule() {
        let s = ExtensiveEntropy::log_energy(1.5, 1000.0).unwrap();
        let h = default_upper_limit(&s, 1.0).unwrap();
        let f = free_energy_exact(&s, 1.0, None).unwrap();

        let n = 2_000_000usize;
        let dx = h / n as f64;
        let phi = |x: f64| s.entropy(x) - x;
        let shift = phi(1500.0);
        let sum: f64 = (0..n).map(|i| (phi((i as f64 + 0.5) * dx) - shift).exp()).sum();
        let oracle = -(shift + (sum * dx).ln());
        assert_relative_eq!(f, oracle, max_relative = 1e-8);
        assert_relative_eq!(f, log_energy_exact(1.5, 1000.0, 1.0), max_relative = 1e-8);
    }

    #[test]
    fn legendre_root_matches_closed_form() {
        for (c, v, beta) in [(1.5, 1000.0, 1.0), (0.7, 20.0, 3.0), (4.0, 1e4, 0.2)] {
            let s = ExtensiveEntropy::log_energy(c, v).unwrap();
            let e = stationary_energy(&s, beta).unwrap();
            assert_relative_eq!(e, c * v / beta, max_relative = 1e-10);
            let f = free_energy_legendre(&s, beta).unwrap();
            let expected = (c * v / beta) * (1.0 - (c / beta).ln());
            assert_relative_eq!(f, expected, max_relative = 1e-10);
        }
        let m = ExtensiveEntropy::mixing(50.0).unwrap();
        assert_relative_eq!(
            stationary_energy(&m, 0.4).unwrap(),
            50.0 * (-0.4f64).exp(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn no_stationary_point_outside_slope_range() {
        let bounded = ExtensiveEntropy::log_energy(1.0, 10.0)
            .unwrap()
            .with_e_max(1.0)
            .unwrap();
        assert_eq!(
            free_energy_legendre(&bounded, 1.0),
            Err(Error::NoStationaryPoint { beta: 1.0 })
        );
        assert_eq!(
            free_energy_legendre(&bounded, 0.5),
            Err(Error::NoStationaryPoint { beta: 0.5 })
        );
        assert!(free_energy_legendre(&bounded, 1.5).is_ok());
        let flat = ExtensiveEntropy::flat(1.0).unwrap();
        assert_eq!(
            free_energy_legendre(&flat, 2.0),
            Err(Error::NoStationaryPoint { beta: 2.0 })
        );
    }

    #[test]
    fn gap_per_volume_is_small_and_shrinks() {
        let s = ExtensiveEntropy::log_energy(1.5, 1000.0).unwrap();
        let r = free_energy_report(&s, 1.0).unwrap();
        assert!(r.gap_per_volume < 0.01);
        // Stirling: the gap is ½ ln(2π cV) + 1/(12 cV) + O(V⁻³).
        let laplace = 0.5 * (2.0 * std::f64::consts::PI * 1500.0).ln() + 1.0 / 18000.0;
        assert_abs_diff_eq!(r.gap, laplace, epsilon = 1e-6);

        let volumes = [1e2, 1e3, 1e4];
        for entropy in [
            ExtensiveEntropy::log_energy(1.5, 1.0).unwrap(),
            ExtensiveEntropy::log_energy(0.5, 1.0).unwrap(),
            ExtensiveEntropy::mixing(1.0).unwrap(),
        ] {
            for beta in [0.5, 1.0, 2.0] {
                let sweep = volume_sweep(&entropy, beta, &volumes).unwrap();
                assert!(
                    gap_per_volume_decreasing(&sweep),
                    "{entropy:?} at beta {beta}: {sweep:?}"
                );
                let ratio = sweep[2].gap_per_volume / sweep[0].gap_per_volume;
                let predicted = (1e4f64.ln() / 1e4) / (1e2f64.ln() / 1e2);
                assert!(ratio < 3.0 * predicted, "ratio {ratio}");
            }
        }
    }

    #[test]
    fn sweep_csv_layout() {
        let s = ExtensiveEntropy::log_energy(1.5, 1.0).unwrap();
        let csv = sweep_to_csv(&volume_sweep(&s, 1.0, &[10.0, 100.0]).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "V,F_exact,F_legendre,gap,gap_per_V");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split(',').count(), 5);
    }

    #[test]
    fn constant_shift_of_entropy() {
        for (s, beta) in [
            (ExtensiveEntropy::log_energy(1.5, 200.0).unwrap(), 1.3),
            (ExtensiveEntropy::mixing(30.0).unwrap(), 0.7),
        ] {
            let c = 3.7;
            let f0 = free_energy_exact(&s, beta, None).unwrap();
            let f1 = free_energy_exact(&s.with_offset(c), beta, None).unwrap();
            assert_abs_diff_eq!(f1, f0 - c / beta, epsilon = 1e-10 * f0.abs().max(1.0));
        }
    }

    #[test]
    fn built_in_entropies_are_concave() {
        ExtensiveEntropy::log_energy(1.5, 10.0)
            .unwrap()
            .check_concavity()
            .unwrap();
        ExtensiveEntropy::mixing(10.0).unwrap().check_concavity().unwrap();
        ExtensiveEntropy::flat(10.0).unwrap().check_concavity().unwrap();
    }

    #[test]
    fn exponential_is_the_equality_case() {
        for rate in [0.5, 1.0, 4.0] {
            let f = Density1D::family(AnalyticFamily::Exponential { rate }).unwrap();
            let r = fluctuation_bounds(&f).unwrap();
            assert_abs_diff_eq!(r.lhs, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.rhs, 0.0, epsilon = 1e-12);
            assert_relative_eq!(r.second_product, 2.0, max_relative = 1e-9);
            assert!(r.first_bound_holds && r.second_bound_holds);
        }
    }

    #[test]
    fn gamma_grid_satisfies_both_bounds() {
        for k in [2.0, 3.0, 5.0] {
            for theta in [0.5, 1.0, 2.0] {
                let f = Density1D::family(AnalyticFamily::Gamma { shape: k, scale: theta }).unwrap();
                let r = fluctuation_bounds(&f).unwrap();
                assert!(
                    r.first_bound_holds && r.second_bound_holds,
                    "k {k} theta {theta}: {r:?}"
                );
                assert_abs_diff_eq!(r.rhs, 1.0, epsilon = 1e-12);
                assert_relative_eq!(r.var_y, k * theta * theta, max_relative = 1e-9);
                if k == 2.0 {
                    assert!(r.lhs.is_infinite());
                } else {
                    // E[β²] = 1/(θ²(k - 2)) for k > 2.
                    assert_relative_eq!(
                        r.second_moment_beta,
                        1.0 / (theta * theta * (k - 2.0)),
                        max_relative = 1e-7
                    );
                    assert_relative_eq!(r.lhs, k / (k - 2.0), max_relative = 1e-7);
                }
            }
        }
    }

    #[test]
    fn infinite_density_at_zero_is_rejected() {
        let f = Density1D::family(AnalyticFamily::Gamma { shape: 0.5, scale: 1.0 }).unwrap();
        assert_eq!(fluctuation_bounds(&f), Err(Error::UndefinedAtZero));
    }

    #[test]
    fn fluctuation_report_serializes_infinities() {
        let f = Density1D::family(AnalyticFamily::Gamma { shape: 2.0, scale: 1.0 }).unwrap();
        let r = fluctuation_bounds(&f).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"inf\""));
        let back: FluctuationReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn kl_bound_equality_case() {
        let g = Density1D::family(AnalyticFamily::Gamma { shape: 3.0, scale: 0.7 })
            .unwrap()
            .scaled(5.0)
            .unwrap();
        let f = g.normalize().unwrap();
        let r = kl_lower_bound_check(&f, &g).unwrap();
        assert_abs_diff_eq!(r.slack, 0.0, epsilon = 1e-8);
        assert_relative_eq!(r.rhs, -(5.0f64.ln()), max_relative = 1e-9);
    }

    #[test]
    fn kl_bound_scaling_cancels() {
        let f = Density1D::family(AnalyticFamily::Gamma { shape: 2.0, scale: 1.0 }).unwrap();
        let e = Density1D::family(AnalyticFamily::Exponential { rate: 1.0 }).unwrap();
        let g = e.clone().scaled(3.0).unwrap();
        let r = kl_lower_bound_check(&f, &g).unwrap();
        let kl = kl_divergence(&f, &e).unwrap();
        // The log-ratio is ln x, whose mean under Gamma(2, 1) is ψ(2) = 1 - γ.
        assert_abs_diff_eq!(kl, 1.0 - 0.577_215_664_901_532_9, epsilon = 1e-9);
        assert_abs_diff_eq!(r.lhs, kl - 3.0f64.ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(r.rhs, -(3.0f64.ln()), epsilon = 1e-10);
        assert_abs_diff_eq!(r.slack, kl, epsilon = 1e-9);
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

    #[test]
    fn randomized_pairs_respect_the_bound() {
        let mut rng = CounterRng::new(2024);
        for _ in 0..50 {
            let f = Density1D::family(random_family(&mut rng)).unwrap();
            let weight = (10f64).powf(2.0 * rng.uniform() - 1.0);
            let g = Density1D::family(random_family(&mut rng))
                .unwrap()
                .scaled(weight)
                .unwrap();
            let r = kl_lower_bound_check(&f, &g).unwrap();
            assert!(r.slack >= -1e-9, "{r:?}");
            assert_abs_diff_eq!(r.slack, r.kl_to_normalized, epsilon = 1e-8);
        }
    }
}
