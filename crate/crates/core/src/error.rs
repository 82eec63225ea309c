use thiserror::Error;

use crate::photon_stats::PairVerdict;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("inadmissible intensity pair: {0}")]
    InvalidPair(PairVerdict),

    #[error("decomposition weight d = {d:e} is negative beyond tolerance")]
    Decomposition { d: f64 },

    #[error("invalid counting rates: {0}")]
    InvalidRates(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// The solver hit its iteration cap; `last` is the final iterate of Δ.
    #[error("solver did not converge after {iterations} iterations (last Δ iterate {last})")]
    Convergence { iterations: usize, last: f64 },
}
