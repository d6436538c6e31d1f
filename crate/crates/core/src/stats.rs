//! Small statistics toolbox: least squares, KS distance, standard errors.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};

/// Ordinary least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Euclidean norm of the residual vector.
    pub residual_norm: f64,
    pub slope_se: f64,
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("least squares needs at least two paired points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("least squares needs distinct abscissae"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    let slope_se = if x.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        residual_norm: rss.sqrt(),
        slope_se,
    })
}

/// Kolmogorov–Smirnov distance between the empirical law of `sorted` and a
/// CDF. `sorted` must be ascending.
pub fn ks_distance<F: FnMut(f64) -> f64>(sorted: &[f64], mut cdf: F) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let c = cdf(x);
        d = d.max((i as f64 + 1.0) / n - c).max(c - i as f64 / n);
    }
    d
}

/// KS distance when the CDF values at the sorted points are already known.
pub fn ks_distance_from_cdf_values(cdf_at_sorted: &[f64]) -> f64 {
    let n = cdf_at_sorted.len() as f64;
    cdf_at_sorted.iter().enumerate().fold(0.0f64, |d, (i, &c)| {
        d.max((i as f64 + 1.0) / n - c).max(c - i as f64 / n)
    })
}

/// Sample mean and its standard error assuming independent draws.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Mean and batch-means standard error for an autocorrelated series.
pub fn batch_means_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let batches = batches.max(2).min(xs.len().max(2));
    let size = xs.len() / batches;
    if size == 0 {
        return mean_se(xs);
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let (_, se) = mean_se(&means);
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (m, se)
}

/// Pearson chi-square test against equal expected counts; returns the p-value.
pub fn chi_square_uniform_pvalue(counts: &[u64]) -> Result<f64> {
    if counts.len() < 2 {
        return Err(invalid("chi-square test needs at least two bins"));
    }
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    if expected <= 0.0 {
        return Err(invalid("chi-square test on empty counts"));
    }
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).map_err(|e| invalid(e.to_string()))?;
    Ok(1.0 - dist.cdf(stat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ols_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 0.5).collect();
        let fit = ols(&x, &y).unwrap();
        assert_abs_diff_eq!(fit.slope, -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        assert!(ols(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn ks_of_uniform_grid_is_small() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_distance(&xs, |x| x);
        assert_abs_diff_eq!(d, 0.5 / n as f64, epsilon = 1e-12);
    }

    #[test]
    fn chi_square_flat_counts() {
        let p = chi_square_uniform_pvalue(&[100, 100, 100, 100]).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
        let p = chi_square_uniform_pvalue(&[400, 0, 0, 0]).unwrap();
        assert!(p < 1e-10);
    }

    #[test]
    fn batch_means_matches_iid_se_on_iid_data() {
        let xs: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 1000) as f64).collect();
        let (m, se) = batch_means_se(&xs, 100);
        let (m2, _) = mean_se(&xs);
        assert_abs_diff_eq!(m, m2, epsilon = 1e-9);
        assert!(se > 0.0);
    }
}
