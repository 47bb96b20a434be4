use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by model construction, oracles and estimators.
///
/// Numeric guards (state-space limits, censoring, row-sum drift) are reported
/// as errors rather than silently degraded results; censoring of passage times
/// inside a single path is an outcome, not an error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("Laplace transform is infinite at lambda = {lambda}")]
    InfiniteLaplace { lambda: f64 },

    #[error("conditioning set {{X >= {threshold}}} has zero probability")]
    ZeroProbabilityTail { threshold: f64 },

    #[error("lattice DP state space too large: {states} states (limit {limit})")]
    StateSpaceOverflow { states: usize, limit: usize },

    #[error("path enumeration guard tripped: {paths:.3e} paths exceed limit {limit:.1e}")]
    EnumerationGuard { paths: f64, limit: f64 },

    #[error("ladder sampling censored {censored} of {total} chains (> 50%); walk likely drifts the wrong way")]
    LadderCensoring { censored: usize, total: usize },

    #[error("h-transform row sum deviates from 1 by {deviation:.3e} at x = {x} (V table too noisy)")]
    RowSumDeviation { x: f64, deviation: f64 },

    #[error("rejection guard tripped: {0}")]
    RejectionGuard(String),

    #[error("series terms not decaying by k_max = {k_max}")]
    NonDecayingSeries { k_max: usize },

    #[error("per-horizon trace not monotone beyond noise: {0}")]
    NonMonotoneTrace(String),

    #[error("quadrature domain error: {0}")]
    QuadratureDomain(String),

    #[error("inconsistent stable parameters alpha = {alpha}, rho = {rho}")]
    InconsistentStable { alpha: f64, rho: f64 },

    #[error("slowly varying remainder bound {bound:.3e} exceeds 10% of value {value:.3e}")]
    RemainderTooLarge { value: f64, bound: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}
