//! Particles scattered uniformly over a region `D`, counted in a subregion
//! `B`, and the two ways of counting them (with or without labels).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{asymptotic_conditional_pmf, inverse_factorial_prior};
use crate::density::DiscretePmf;
use crate::error::{invalid, Result};
use crate::rng::CounterRng;

/// Ratio `|B|/|D|` at or below which `B` counts as infinitesimal.
pub const INFINITESIMAL_RATIO: f64 = 0.05;

/// Placements per independently seeded chunk.
const CHUNK: u64 = 1000;

/// Largest particle count for which labelled configurations are enumerated
/// one by one.
pub const MAX_ENUMERATED: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPair {
    pub b_volume: f64,
    pub d_volume: f64,
    pub particles: u64,
}

impl RegionPair {
    pub fn new(b_volume: f64, d_volume: f64, particles: u64) -> Result<Self> {
        let r = Self {
            b_volume,
            d_volume,
            particles,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b_volume > 0.0 && self.d_volume.is_finite() && self.b_volume <= self.d_volume) {
            return Err(invalid(format!(
                "need 0 < |B| <= |D|, got |B| = {}, |D| = {}",
                self.b_volume, self.d_volume
            )));
        }
        Ok(())
    }

    pub fn ratio(&self) -> f64 {
        self.b_volume / self.d_volume
    }

    /// Whether `|B| ≤ 0.05 |D|`, the regime where the Poisson prior applies.
    pub fn is_infinitesimal(&self) -> bool {
        self.ratio() <= INFINITESIMAL_RATIO
    }
}

/// Empirical law of the count in `B` over repeated placements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialCounts {
    pub regions: RegionPair,
    pub samples: u64,
    /// `counts[k]` placements put exactly `k` particles in `B`.
    pub counts: Vec<u64>,
}

impl SpatialCounts {
    pub fn pmf(&self) -> Result<DiscretePmf> {
        DiscretePmf::new(self.counts.iter().map(|&c| c as f64).collect())
    }

    pub fn mean(&self) -> f64 {
        let s: u64 = self.counts.iter().enumerate().map(|(k, &c)| k as u64 * c).sum();
        s as f64 / self.samples as f64
    }
}

/// Place `N` particles uniformly on `[0, |D|)` per sample, count those in
/// `[0, |B|)`. Chunks of samples draw from their own split stream so the
/// result does not depend on the thread count.
pub fn spatial_poisson_counts(regions: &RegionPair, samples: u64, seed: u64) -> Result<SpatialCounts> {
    regions.validate()?;
    if samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let root = CounterRng::new(seed);
    let n = regions.particles;
    let (b, d) = (regions.b_volume, regions.d_volume);
    let chunks = samples.div_ceil(CHUNK);
    let histograms: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = root.split(c);
            let mut hist = vec![0u64; n as usize + 1];
            let todo = CHUNK.min(samples - c * CHUNK);
            for _ in 0..todo {
                let mut k = 0usize;
                for _ in 0..n {
                    let x = rng.uniform() * d;
                    if x < b {
                        k += 1;
                    }
                }
                hist[k] += 1;
            }
            hist
        })
        .collect();
    let mut counts = vec![0u64; n as usize + 1];
    for h in histograms {
        for (c, v) in counts.iter_mut().zip(h) {
            *c += v;
        }
    }
    while counts.len() > 1 && counts[counts.len() - 1] == 0 {
        counts.pop();
    }
    Ok(SpatialCounts {
        regions: *regions,
        samples,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsParameters {
    pub b_volume: f64,
    pub d_volume: f64,
    pub particles: u64,
    pub ratio: f64,
    /// Intensity of the tilted Poisson law (i).
    pub lambda: f64,
    pub infinitesimal: bool,
    /// Labelled configurations enumerated for law (ii); zero when the
    /// closed form was used.
    pub configurations: u64,
}

/// Side-by-side conditional laws of the count in `B` given `N` particles in
/// total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsParadoxReport {
    /// Indistinguishable particles: prior `∝ 1/k!`, tilted by the bath.
    pub law_i: DiscretePmf,
    /// Labelled particles: occupancy law of distinct configurations.
    pub law_ii: DiscretePmf,
    /// `KL(law_ii ‖ law_i)`.
    pub kl: f64,
    pub parameters: GibbsParameters,
    pub seed: Option<u64>,
}

/// Law (i): `Q⁻¹ (1/k!) e^{μ k}` on `0..=N`, where the bath is the count in
/// `D \ B` with Poisson prior of mean `N(1 - r)`. The bath count cannot
/// exceed `N`, so its log-slope is the backward difference at `N`, which
/// gives `e^μ = N r / (1 - r)`.
///
/// Law (ii): each of the `2^N` labelled configurations has weight
/// `r^k (1 - r)^{N-k}`; summing by occupancy gives the Binomial law.
pub fn gibbs_paradox_demo(regions: &RegionPair, seed: Option<u64>) -> Result<GibbsParadoxReport> {
    regions.validate()?;
    let n = regions.particles;
    let r = regions.ratio();
    if n == 0 {
        return Err(invalid("need at least one particle"));
    }

    let (law_i, lambda) = if r < 1.0 {
        let lambda = n as f64 * r / (1.0 - r);
        let prior = inverse_factorial_prior(n as usize);
        (asymptotic_conditional_pmf(&prior, lambda.ln(), n)?, lambda)
    } else {
        (DiscretePmf::point_mass(n as usize, n as usize)?, f64::INFINITY)
    };

    let (law_ii, configurations) = if n <= MAX_ENUMERATED {
        let mut w = vec![0.0; n as usize + 1];
        let total = 1u64 << n;
        for config in 0..total {
            let k = config.count_ones() as i32;
            w[k as usize] += r.powi(k) * (1.0 - r).powi(n as i32 - k);
        }
        (DiscretePmf::new(w)?, total)
    } else {
        (DiscretePmf::binomial(n, r)?, 0)
    };

    let kl = law_ii.kl(&law_i)?;
    Ok(GibbsParadoxReport {
        law_i,
        law_ii,
        kl,
        parameters: GibbsParameters {
            b_volume: regions.b_volume,
            d_volume: regions.d_volume,
            particles: n,
            ratio: r,
            lambda,
            infinitesimal: regions.is_infinitesimal(),
            configurations,
        },
        seed,
    })
}
