//! Poisson photon-number statistics of phase-randomised coherent pulses.
//!
//! A dephased coherent state of mean photon number μ is the mixture
//! `Σ P_n(μ) |n⟩⟨n|` with `P_n(μ) = μⁿ e^{-μ} / n!`. For two intensities
//! `μ < μ′` satisfying `μ′e^{-μ′} > μe^{-μ}` both states split into vacuum,
//! single-photon and a shared multi-photon mixture ρ_c:
//!
//! ```text
//! ρ_μ  = e^{-μ}|0⟩⟨0|  + μ e^{-μ}|1⟩⟨1|  + c ρ_c
//! ρ_μ′ = e^{-μ′}|0⟩⟨0| + μ′e^{-μ′}|1⟩⟨1| + c·k ρ_c + d ρ_d
//! ```
//!
//! with `c = 1 − e^{-μ} − μe^{-μ}` and `k = μ′²e^{-μ′} / (μ²e^{-μ})`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerance;

/// Above this mean the incremental product would start from an underflowed
/// `e^{-μ}`, so the log-space sum is used instead.
const RECURRENCE_MU_LIMIT: f64 = 500.0;

/// `P_n(μ) = μⁿ e^{-μ} / n!`.
pub fn poisson_pmf(n: u32, mu: f64) -> Result<f64> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!(
            "mean photon number must be finite and non-negative, got {mu}"
        )));
    }
    if mu == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    if mu <= RECURRENCE_MU_LIMIT {
        let mut p = (-mu).exp();
        for k in 1..=n {
            p *= mu / f64::from(k);
            if p == 0.0 {
                break;
            }
        }
        Ok(p)
    } else {
        let ln_fact: f64 = (2..=n).map(|k| f64::from(k).ln()).sum();
        Ok((f64::from(n) * mu.ln() - mu - ln_fact).exp())
    }
}

/// Vacuum probability `e^{-μ}`.
pub(crate) fn p0(mu: f64) -> f64 {
    (-mu).exp()
}

/// Single-photon probability `μe^{-μ}`.
pub(crate) fn p1(mu: f64) -> f64 {
    mu * (-mu).exp()
}

/// Multi-photon probability `1 − e^{-μ} − μe^{-μ}`, evaluated without
/// catastrophic cancellation for small μ.
pub(crate) fn multi_photon_probability(mu: f64) -> f64 {
    if mu < 1.0 {
        // Σ_{n≥2} μⁿe^{-μ}/n! summed directly; converges in a handful of terms
        let e = (-mu).exp();
        let mut term = e * mu * mu / 2.0;
        let mut sum = 0.0;
        let mut n = 2.0;
        while term > sum * 1e-18 && term > 0.0 {
            sum += term;
            n += 1.0;
            term *= mu / n;
        }
        sum
    } else {
        -(-mu).exp_m1() - mu * (-mu).exp()
    }
}

/// Outcome of checking an intensity pair `(μ, μ′)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum PairVerdict {
    Valid,
    /// One of the intensities is zero, negative or not finite.
    NonPositive {
        mu: f64,
        mu_prime: f64,
    },
    /// `μ′ > μ` fails.
    NotIncreasing {
        mu: f64,
        mu_prime: f64,
    },
    /// `μ′e^{-μ′} > μe^{-μ}` fails; the single-photon weights are carried.
    SinglePhotonWeightNotIncreasing {
        mu_weight: f64,
        mu_prime_weight: f64,
    },
}

impl PairVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, PairVerdict::Valid)
    }
}

impl fmt::Display for PairVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PairVerdict::Valid => write!(f, "valid"),
            PairVerdict::NonPositive { mu, mu_prime } => {
                write!(
                    f,
                    "intensities must be positive (mu = {mu}, mu' = {mu_prime})"
                )
            }
            PairVerdict::NotIncreasing { mu, mu_prime } => {
                write!(f, "mu' must exceed mu (mu = {mu}, mu' = {mu_prime})")
            }
            PairVerdict::SinglePhotonWeightNotIncreasing {
                mu_weight,
                mu_prime_weight,
            } => write!(
                f,
                "mu' e^-mu' = {mu_prime_weight:.6} must exceed mu e^-mu = {mu_weight:.6}"
            ),
        }
    }
}

/// Checks `μ′ > μ > 0` and `μ′e^{-μ′} > μe^{-μ}`.
pub fn validate_pair(mu: f64, mu_prime: f64) -> PairVerdict {
    let positive = |x: f64| x.is_finite() && x > 0.0;
    if !positive(mu) || !positive(mu_prime) {
        return PairVerdict::NonPositive { mu, mu_prime };
    }
    if mu_prime <= mu {
        return PairVerdict::NotIncreasing { mu, mu_prime };
    }
    let mu_weight = p1(mu);
    let mu_prime_weight = p1(mu_prime);
    if mu_prime_weight <= mu_weight {
        return PairVerdict::SinglePhotonWeightNotIncreasing {
            mu_weight,
            mu_prime_weight,
        };
    }
    PairVerdict::Valid
}

/// Source intensities of the two signal classes. Construction enforces the
/// admissibility condition, so every holder of a `ProtocolParams` may rely
/// on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProtocolParams {
    mu: f64,
    mu_prime: f64,
}

impl ProtocolParams {
    pub fn new(mu: f64, mu_prime: f64) -> Result<Self> {
        match validate_pair(mu, mu_prime) {
            PairVerdict::Valid => Ok(Self { mu, mu_prime }),
            other => Err(Error::InvalidPair(other)),
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn mu_prime(&self) -> f64 {
        self.mu_prime
    }

    /// Ratio `μ²e^{-μ} / (μ′²e^{-μ′})` of the two-photon weights; scales the
    /// Y_μ′ counting rate into a bound on `c·s_c`.
    pub(crate) fn two_photon_ratio(&self) -> f64 {
        let (mu, mp) = (self.mu, self.mu_prime);
        (mu * mu) / (mp * mp) * (mp - mu).exp()
    }
}

/// Weights of the convex decompositions of ρ_μ and ρ_μ′.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionCoefficients {
    /// Weight of ρ_c in ρ_μ.
    pub c: f64,
    /// Weight of the remainder ρ_d in ρ_μ′.
    pub d: f64,
    /// `μ′²e^{-μ′} / (μ²e^{-μ})`: the weight of ρ_c in ρ_μ′ is `c·multi_ratio`.
    pub multi_ratio: f64,
}

/// Decomposition weights for an admissible pair. A `d` within
/// [`tolerance::D_WEIGHT`] below zero is rounded up to zero.
pub fn decompose(params: &ProtocolParams) -> Result<DecompositionCoefficients> {
    let (mu, mp) = (params.mu(), params.mu_prime());
    let c = multi_photon_probability(mu);
    if !(c > 0.0) {
        return Err(Error::Domain(format!(
            "multi-photon weight c = {c} at mu = {mu}"
        )));
    }
    let multi_ratio = 1.0 / params.two_photon_ratio();
    // d = Σ_{n≥3} (P_n(μ′) − k P_n(μ)); the direct difference of closed forms
    // cancels badly as μ′ → μ.
    let d = multi_photon_probability(mp) - c * multi_ratio;
    if d < -tolerance::D_WEIGHT {
        return Err(Error::Decomposition { d });
    }
    Ok(DecompositionCoefficients {
        c,
        d: d.max(0.0),
        multi_ratio,
    })
}
