//! Decoy-state verification of the tagged (multi-photon) count fraction.
//!
//! The crate is organised bottom-up:
//!
//! * [`photon_stats`] – Poisson photon-number statistics and the convex
//!   decomposition of the two dephased signal states.
//! * [`bound_engine`] – asymptotic upper bounds on the tagged fraction Δ of
//!   class Y_μ (crude, optimised crude, tightened), the single-photon rate
//!   lower bound and the Δ′ bound for class Y_μ′.
//! * [`finite_stats`] – fluctuation model and the self-consistent solver for
//!   a finite number of pulses.
//! * [`channel_sim`] – expected or sampled counting rates for lossy channels
//!   and eavesdropper strategies, plus the ground-truth Δ.
//! * [`key_rate`] – binary entropy and the tagged-signal key rate.
//! * [`feasibility`] – pulse-count requirements of the vacuum + very weak
//!   decoy approach.

// `!(x > 0.0)` style checks deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bound_engine;
pub mod channel_sim;
mod error;
pub mod feasibility;
pub mod finite_stats;
pub mod key_rate;
pub mod photon_stats;

pub use bound_engine::{
    delta_prime_bound, hwang_bound, hwang_optimized, iterate_sc_s1, wang_asymptotic_bound,
    BoundReport, Method, ObservedRates, ScS1Solution,
};
pub use channel_sim::{
    derive_seed, expected_rates, sample_observation, true_delta, ChannelScenario, ClassCounts,
    DarkCountModel, SimulatedObservation,
};
pub use error::{Error, Result};
pub use feasibility::{
    acquisition_time, feasibility_report, required_pulses, weak_decoy_s1_bound, AcquisitionTime,
    FeasibilityReport, WeakDecoySetup,
};
pub use finite_stats::{
    confidence_bound, finite_bound, relative_fluctuation, FluctuationSettings, PulseBudget, R0Mode,
    SubPopulation,
};
pub use key_rate::{binary_entropy, gllp_rate, KeyRate, KeyRateInput};
pub use photon_stats::{
    decompose, poisson_pmf, validate_pair, DecompositionCoefficients, PairVerdict, ProtocolParams,
};

/// Numerical tolerances shared by every module.
pub mod tolerance {
    /// Allowed deviation of a decomposition's weights from summing to one.
    pub const SUM: f64 = 1e-12;
    /// A weight `d` below `-D_WEIGHT` signals an inadmissible intensity pair.
    pub const D_WEIGHT: f64 = 1e-12;
    /// Default relative tolerance of the fixed-point solvers.
    pub const SOLVER_TOL: f64 = 1e-10;
    /// Default iteration cap of the fixed-point solvers.
    pub const SOLVER_MAX_ITER: usize = 10_000;
}

/// Stopping rule shared by the fixed-point solvers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: tolerance::SOLVER_TOL,
            max_iter: tolerance::SOLVER_MAX_ITER,
        }
    }
}

impl SolverOptions {
    pub fn new(tol: f64, max_iter: usize) -> Result<Self> {
        if !(tol > 0.0 && tol <= 1e-6) {
            return Err(Error::Domain(format!(
                "solver tolerance must lie in (0, 1e-6], got {tol}"
            )));
        }
        if max_iter == 0 {
            return Err(Error::Domain("max_iter must be at least 1".into()));
        }
        Ok(Self { tol, max_iter })
    }
}
