//! Numerical laboratory for conditional limit laws of statistical mechanics.
//!
//! The crate computes exact conditional laws of a small variable given the
//! value of a sum, the asymptotic canonical (exponentially tilted) forms that
//! approximate them, and the oracles used to check one against the other:
//!
//! - [`density`]: densities, pmfs, moments, KL divergence.
//! - [`conditional`]: exact conditional laws given `X + Y = h` or a shell.
//! - [`limit_law`]: tilting exponent, partition function, convergence study.
//! - [`counting`]: discrete tilted laws, spatial counts, Gibbs paradox, colonies.
//! - [`phase_space`]: energy-shell sampling of separable Hamiltonians.
//! - [`thermo`]: free energy via Legendre transform, fluctuation and KL bounds.
//! - [`exchange`]: kinetic exchange economy under conservation vs selection.

// Guards of the form `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditional;
pub mod counting;
pub mod density;
pub mod error;
pub mod exchange;
pub mod limit_law;
pub mod phase_space;
pub mod quad;
pub mod rng;
mod serde_ext;
pub mod stats;
pub mod thermo;

pub use density::{AnalyticFamily, Density1D, DiscretePmf};
pub use error::{Error, Result};
pub use rng::CounterRng;
