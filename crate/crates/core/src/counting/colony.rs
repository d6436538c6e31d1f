//! Two bacterial colonies with logistic birth and death and migration in
//! both directions, simulated event by event.
//!
//! Each colony has per-capita birth rate `b` and pairwise death rate
//! `d n²`, so births balance deaths at `n* = b / d`. Migrants leave colony
//! `i` at per-capita rate `m_i`. The statistic of interest is the small
//! colony's size given the combined population, collected with time weights
//! after a burn-in of one tenth of the horizon.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::asymptotic_conditional_pmf;
use crate::density::DiscretePmf;
use crate::error::{invalid, Error, Result};
use crate::rng::CounterRng;
use crate::stats::ols;

/// Fraction of the horizon discarded before recording.
pub const BURN_IN_FRACTION: f64 = 0.1;

/// Largest allowed ratio of the small colony's equilibrium to the large one's.
pub const MAX_SIZE_RATIO: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Colony {
    pub birth: f64,
    pub death: f64,
    /// Per-capita rate of emigration to the other colony.
    pub migration: f64,
    pub initial: u64,
}

impl Colony {
    /// Size at which births balance deaths.
    pub fn equilibrium(&self) -> f64 {
        self.birth / self.death
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = self.birth > 0.0
            && self.birth.is_finite()
            && self.death > 0.0
            && self.death.is_finite()
            && self.migration >= 0.0
            && self.migration.is_finite();
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("{name} colony rates {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColonyModel {
    pub small: Colony,
    pub large: Colony,
}

impl ColonyModel {
    pub fn new(small: Colony, large: Colony) -> Result<Self> {
        let m = Self { small, large };
        m.validate()?;
        Ok(m)
    }

    /// Both colonies with growth rate `r` and equilibria `k_small`,
    /// `k_large`; the small colony emigrates at per-capita rate `migration`
    /// and the large one at the rate that makes the two migrant fluxes equal
    /// at equilibrium, so the fixed point is `(k_small, k_large)`.
    pub fn balanced(r: f64, k_small: f64, k_large: f64, migration: f64) -> Result<Self> {
        Self::new(
            Colony {
                birth: r,
                death: r / k_small,
                migration,
                initial: k_small.round() as u64,
            },
            Colony {
                birth: r,
                death: r / k_large,
                migration: migration * k_small / k_large,
                initial: k_large.round() as u64,
            },
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.small.validate("small")?;
        self.large.validate("large")?;
        let ratio = self.small.equilibrium() / self.large.equilibrium();
        if ratio > MAX_SIZE_RATIO {
            return Err(invalid(format!(
                "small colony equilibrium is {ratio} of the large one; at most {MAX_SIZE_RATIO} allowed"
            )));
        }
        if self.small.initial + self.large.initial == 0 {
            return Err(invalid("initial populations are both zero"));
        }
        Ok(())
    }

    /// Net migrant flux from small to large at the uncoupled equilibria.
    pub fn flux_imbalance(&self) -> f64 {
        self.small.migration * self.small.equilibrium() - self.large.migration * self.large.equilibrium()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColonyRun {
    pub t_max: f64,
    pub replicas: u64,
    /// Total to condition on; defaults to the rounded time-averaged total.
    pub target: Option<u64>,
    /// Safety cap on events per replica.
    pub max_events: u64,
}

impl Default for ColonyRun {
    fn default() -> Self {
        Self {
            t_max: 1000.0,
            replicas: 1,
            target: None,
            max_events: 1_000_000_000,
        }
    }
}

/// Time-weighted occupation of one or more replicas after burn-in.
#[derive(Debug, Clone, Default, PartialEq)]
struct Occupation {
    marginal_k: Vec<f64>,
    marginal_l: Vec<f64>,
    /// Total population → time spent at each small-colony size.
    by_total: BTreeMap<u64, Vec<f64>>,
    time: f64,
    events: u64,
    extinct_at: Option<f64>,
}

fn add_at(v: &mut Vec<f64>, i: usize, w: f64) {
    if v.len() <= i {
        v.resize(i + 1, 0.0);
    }
    v[i] += w;
}

impl Occupation {
    fn record(&mut self, k: u64, l: u64, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        add_at(&mut self.marginal_k, k as usize, dt);
        add_at(&mut self.marginal_l, l as usize, dt);
        add_at(self.by_total.entry(k + l).or_default(), k as usize, dt);
        self.time += dt;
    }

    fn merge(&mut self, other: Occupation) {
        for (i, w) in other.marginal_k.into_iter().enumerate() {
            add_at(&mut self.marginal_k, i, w);
        }
        for (i, w) in other.marginal_l.into_iter().enumerate() {
            add_at(&mut self.marginal_l, i, w);
        }
        for (t, v) in other.by_total {
            let e = self.by_total.entry(t).or_default();
            for (i, w) in v.into_iter().enumerate() {
                add_at(e, i, w);
            }
        }
        self.time += other.time;
        self.events += other.events;
    }
}

fn simulate_replica(model: &ColonyModel, run: &ColonyRun, mut rng: CounterRng) -> Occupation {
    let (s, g) = (model.small, model.large);
    let burn = BURN_IN_FRACTION * run.t_max;
    let (mut k, mut l) = (s.initial, g.initial);
    let mut t: f64 = 0.0;
    let mut occ = Occupation::default();
    while occ.events < run.max_events {
        let (kf, lf) = (k as f64, l as f64);
        let rates = [
            s.birth * kf,
            s.death * kf * kf,
            s.migration * kf,
            g.birth * lf,
            g.death * lf * lf,
            g.migration * lf,
        ];
        let total: f64 = rates.iter().sum();
        if total == 0.0 {
            occ.record(k, l, run.t_max - t.max(burn));
            occ.extinct_at = Some(t);
            break;
        }
        let dt = rng.exponential(total);
        let next = t + dt;
        let from = t.max(burn);
        let to = next.min(run.t_max);
        if to > from {
            occ.record(k, l, to - from);
        }
        if next >= run.t_max {
            break;
        }
        t = next;
        occ.events += 1;
        let mut u = rng.uniform() * total;
        // Rounding can leave `u` just past the last bin; fall back to the
        // last event that is possible in this state.
        let mut event = rates.iter().rposition(|&r| r > 0.0).unwrap_or(0);
        for (i, r) in rates.iter().enumerate() {
            if u < *r {
                event = i;
                break;
            }
            u -= r;
        }
        match event {
            0 => k += 1,
            1 => k -= 1,
            2 => {
                k -= 1;
                l += 1;
            }
            3 => l += 1,
            4 => l -= 1,
            _ => {
                l -= 1;
                k += 1;
            }
        }
    }
    occ
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColonyReport {
    /// The total population conditioned on.
    pub target: u64,
    /// Time-weighted law of the small colony given the total equals `target`.
    pub conditional: DiscretePmf,
    /// `Q⁻¹ p̂_K(k) e^{μ̂ k}` from the empirical marginal of the small colony.
    pub tilted: DiscretePmf,
    /// Unconditioned law of the small colony.
    pub marginal_k: DiscretePmf,
    /// Estimated `μ`: minus the log-slope of the large colony's law at `target`.
    pub mu: f64,
    pub tv_tilted: f64,
    pub tv_marginal: f64,
    pub events: u64,
    pub observed_time: f64,
    /// Fraction of the observed time spent at the target total.
    pub target_time_fraction: f64,
    pub mean_total: f64,
    /// Extinction time of each replica that died out, in replica order.
    pub extinctions: Vec<Option<f64>>,
}

impl ColonyReport {
    pub fn any_extinction(&self) -> bool {
        self.extinctions.iter().any(Option::is_some)
    }

    /// `ExtinctionBeforeStationarity` if a replica died out before its
    /// burn-in ended.
    pub fn check_stationarity(&self, t_max: f64) -> Result<()> {
        match self
            .extinctions
            .iter()
            .flatten()
            .find(|&&t| t < BURN_IN_FRACTION * t_max)
        {
            Some(&time) => Err(Error::ExtinctionBeforeStationarity { time }),
            None => Ok(()),
        }
    }
}

/// `-d/dl ln p(l)` at `m` by a least-squares line through the bins within
/// `±w` of `m`. On a symmetric window the quadratic term does not bias the
/// slope.
fn local_log_slope(p: &[f64], m: u64, w: u64) -> Result<f64> {
    let lo = m.saturating_sub(w);
    let hi = (m + w).min(p.len().saturating_sub(1) as u64);
    let half = (m - lo).min(hi.saturating_sub(m));
    let (xs, ys): (Vec<f64>, Vec<f64>) = (m - half..=m + half)
        .filter(|&l| p[l as usize] > 0.0)
        .map(|l| (l as f64 - m as f64, p[l as usize].ln()))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::ZeroEvent(m));
    }
    Ok(ols(&xs, &ys)?.slope)
}

/// Simulate `run.replicas` independent replicas and compare the law of the
/// small colony given the total with the tilted marginal. Replica `i` draws
/// from stream `i` of the seed.
pub fn colony_simulation(model: &ColonyModel, run: &ColonyRun, seed: u64) -> Result<ColonyReport> {
    model.validate()?;
    if !(run.t_max > 0.0 && run.t_max.is_finite()) || run.replicas == 0 {
        return Err(invalid("colony run needs t_max > 0 and at least one replica"));
    }
    let root = CounterRng::new(seed);
    let reps: Vec<Occupation> = (0..run.replicas)
        .into_par_iter()
        .map(|i| simulate_replica(model, run, root.split(i)))
        .collect();
    let extinctions: Vec<Option<f64>> = reps.iter().map(|r| r.extinct_at).collect();
    let mut occ = Occupation::default();
    for r in reps {
        occ.merge(r);
    }
    if occ.time <= 0.0 {
        let time = extinctions.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        return Err(Error::ExtinctionBeforeStationarity { time });
    }

    let mean_total = occ
        .by_total
        .iter()
        .map(|(t, v)| *t as f64 * v.iter().sum::<f64>())
        .sum::<f64>()
        / occ.time;
    let target = run.target.unwrap_or(mean_total.round() as u64);
    let at_target = occ.by_total.get(&target).ok_or(Error::ZeroEvent(target))?;
    let target_time: f64 = at_target.iter().sum();
    if target_time <= 0.0 {
        return Err(Error::ZeroEvent(target));
    }
    let mut cond = at_target.clone();
    cond.resize(target as usize + 1, 0.0);
    let conditional = DiscretePmf::new(cond)?;
    let marginal_k = DiscretePmf::new(occ.marginal_k.clone())?;

    let sd_l = {
        let pl = DiscretePmf::new(occ.marginal_l.clone())?;
        pl.variance().sqrt()
    };
    let window = ((0.5 * sd_l).round() as u64).max(3);
    let mu = -local_log_slope(&occ.marginal_l, target, window)?;
    let tilted = asymptotic_conditional_pmf(&marginal_k, mu, target)?;

    Ok(ColonyReport {
        target,
        tv_tilted: conditional.total_variation(&tilted),
        tv_marginal: conditional.total_variation(&marginal_k),
        conditional,
        tilted,
        marginal_k,
        mu,
        events: occ.events,
        observed_time: occ.time,
        target_time_fraction: target_time / occ.time,
        mean_total,
        extinctions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_validation() {
        assert!(ColonyModel::balanced(1.0, 10.0, 100.0, 0.5).is_err());
        let m = ColonyModel::balanced(1.0, 4.0, 200.0, 0.5).unwrap();
        assert!(m.flux_imbalance().abs() < 1e-12);
        assert!((m.small.equilibrium() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn simulation_is_reproducible() {
        let m = ColonyModel::balanced(1.0, 4.0, 200.0, 0.5).unwrap();
        let run = ColonyRun {
            t_max: 50.0,
            replicas: 3,
            ..ColonyRun::default()
        };
        let a = colony_simulation(&m, &run, 5).unwrap();
        let b = colony_simulation(&m, &run, 5).unwrap();
        assert_eq!(a, b);
        let c = colony_simulation(&m, &run, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn lethal_small_colony_is_empty() {
        let mut m = ColonyModel::balanced(1.0, 4.0, 200.0, 0.5).unwrap();
        m.small.death = 1e6;
        let run = ColonyRun {
            t_max: 100.0,
            replicas: 2,
            ..ColonyRun::default()
        };
        let r = colony_simulation(&m, &run, 1).unwrap();
        assert!(r.conditional.pmf(0) > 0.99, "{:?}", r.conditional.probs());
        assert!(r.tilted.pmf(0) > 0.99);
    }

    #[test]
    fn isolated_small_colony_is_independent_of_the_total() {
        // Without migration the small colony is its own closed chain; it
        // dies out quickly and stays at zero whatever the total.
        let m = ColonyModel::new(
            Colony {
                birth: 1.0,
                death: 1.0,
                migration: 0.0,
                initial: 1,
            },
            Colony {
                birth: 1.0,
                death: 0.01,
                migration: 0.0,
                initial: 100,
            },
        )
        .unwrap();
        let run = ColonyRun {
            t_max: 2000.0,
            replicas: 4,
            ..ColonyRun::default()
        };
        let r = colony_simulation(&m, &run, 3).unwrap();
        assert!(r.conditional.total_variation(&r.marginal_k) < 0.01);
    }

    #[test]
    fn conditional_follows_tilted_marginal() {
        let m = ColonyModel::balanced(1.0, 4.0, 200.0, 0.5).unwrap();
        let run = ColonyRun {
            t_max: 3000.0,
            replicas: 8,
            ..ColonyRun::default()
        };
        let r = colony_simulation(&m, &run, 2024).unwrap();
        assert!(r.events > 1_000_000);
        assert!(r.tv_tilted < 0.05, "tv {} mu {}", r.tv_tilted, r.mu);
        assert!(r.extinctions.iter().all(Option::is_none));
    }
}
