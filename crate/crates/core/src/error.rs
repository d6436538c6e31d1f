use thiserror::Error;

/// Failures raised by the numerical and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("integral is zero, infinite or NaN: {0}")]
    NonIntegrable(String),
    #[error("point {x} lies outside the support [{lo}, {hi}]")]
    OutOfSupport { x: f64, lo: f64, hi: f64 },
    #[error("density vanishes at {0}")]
    ZeroDensity(f64),
    #[error("reference density vanishes where the first one has mass (at {0})")]
    SupportMismatch(f64),
    #[error("marginal density of the total underflows at h = {0}")]
    ZeroMarginal(f64),
    #[error("conditioning event has zero probability (total = {0})")]
    ZeroEvent(u64),
    #[error("energy shell around h = {h} with width {delta} carries no mass")]
    EmptyShell { h: f64, delta: f64 },
    #[error("evaluation point sits on a support boundary: {0}")]
    BoundaryEvaluation(String),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("pmf carries no mass: {0}")]
    ZeroMass(String),
    #[error("population went extinct at t = {time} before reaching stationarity")]
    ExtinctionBeforeStationarity { time: f64 },
    #[error("rejection sampler acceptance rate {rate:e} is below 1e-6; widen the shell")]
    RejectionStall { rate: f64 },
    #[error("invalid shell: {0}")]
    InvalidShell(String),
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error("Monte Carlo budget exhausted: {0}")]
    MonteCarloBudgetExceeded(String),
    #[error("beta = {beta} lies outside the range of the entropy slope")]
    NoStationaryPoint { beta: f64 },
    #[error("density value at zero is not finite")]
    UndefinedAtZero,
    #[error("only {accepted} snapshots passed selection (need {required}); widen delta")]
    InsufficientAcceptedSnapshots { accepted: usize, required: usize },
    #[error("histograms use different binning or city definitions")]
    BinningMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// Stable variant name, used in run manifests.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonIntegrable(_) => "NonIntegrable",
            Error::OutOfSupport { .. } => "OutOfSupport",
            Error::ZeroDensity(_) => "ZeroDensity",
            Error::SupportMismatch(_) => "SupportMismatch",
            Error::ZeroMarginal(_) => "ZeroMarginal",
            Error::ZeroEvent(_) => "ZeroEvent",
            Error::EmptyShell { .. } => "EmptyShell",
            Error::BoundaryEvaluation(_) => "BoundaryEvaluation",
            Error::NoSolution(_) => "NoSolution",
            Error::ZeroMass(_) => "ZeroMass",
            Error::ExtinctionBeforeStationarity { .. } => "ExtinctionBeforeStationarity",
            Error::RejectionStall { .. } => "RejectionStall",
            Error::InvalidShell(_) => "InvalidShell",
            Error::EmptySampleSet => "EmptySampleSet",
            Error::MonteCarloBudgetExceeded(_) => "MonteCarloBudgetExceeded",
            Error::NoStationaryPoint { .. } => "NoStationaryPoint",
            Error::UndefinedAtZero => "UndefinedAtZero",
            Error::InsufficientAcceptedSnapshots { .. } => "InsufficientAcceptedSnapshots",
            Error::BinningMismatch => "BinningMismatch",
            Error::InvalidParameter(_) => "InvalidParameter",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
