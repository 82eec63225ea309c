//! Pulse budget needed by the vacuum + very weak decoy approach.
//!
//! With a weak decoy of intensity `μ_v ≤ η` the single-photon signal per
//! pulse is about `ημ_v`, far below the dark-count rate `s₀` on a lossy
//! channel. Any useful estimate then needs the dark-count rate of the decoy
//! class pinned down to a tiny relative fluctuation, which in turn needs an
//! enormous number of pulses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_stats::{relative_fluctuation, FluctuationSettings};

const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakDecoySetup {
    pub eta: f64,
    pub s0: f64,
    pub mu_v: f64,
    /// Pulses per second.
    pub rep_rate: f64,
    pub confidence_exponent: f64,
}

impl WeakDecoySetup {
    pub fn new(
        eta: f64,
        s0: f64,
        mu_v: f64,
        rep_rate: f64,
        confidence_exponent: f64,
    ) -> Result<Self> {
        let setup = Self {
            eta,
            s0,
            mu_v,
            rep_rate,
            confidence_exponent,
        };
        setup.check()?;
        Ok(setup)
    }

    fn check(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Domain(format!(
                "eta must lie in (0, 1), got {}",
                self.eta
            )));
        }
        if !(0.0..1.0).contains(&self.s0) {
            return Err(Error::Domain(format!(
                "s0 must lie in [0, 1), got {}",
                self.s0
            )));
        }
        if !(self.mu_v > 0.0 && self.mu_v <= self.eta) {
            return Err(Error::Domain(format!(
                "weak decoy intensity must satisfy 0 < mu_v <= eta, got {}",
                self.mu_v
            )));
        }
        if !(self.rep_rate > 0.0) {
            return Err(Error::Domain(format!(
                "repetition rate must be positive, got {}",
                self.rep_rate
            )));
        }
        if !(self.confidence_exponent > 0.0) {
            return Err(Error::Domain("confidence exponent must be positive".into()));
        }
        Ok(())
    }
}

/// Single-photon rate certified by the weak decoy when every multi-photon
/// pulse is assumed to click and dark counts are ignored:
/// `(ημ_v − μ_v²/2) / (μ_v e^{-μ_v})`.
pub fn weak_decoy_s1_bound(setup: &WeakDecoySetup) -> f64 {
    let mu_v = setup.mu_v;
    (setup.eta * mu_v - mu_v * mu_v / 2.0) / (mu_v * (-mu_v).exp())
}

/// Number of pulses at which the dark-count rate's relative fluctuation
/// `√(4E/(s₀N))` drops to `target`: `N = 4E / (s₀·target²)`.
pub fn required_pulses(setup: &WeakDecoySetup, target: f64) -> Result<f64> {
    setup.check()?;
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Domain(format!(
            "relative fluctuation target must lie in (0, 1], got {target}"
        )));
    }
    if !(setup.s0 > 0.0) {
        return Err(Error::Domain(
            "a zero dark-count rate has no fluctuation to control".into(),
        ));
    }
    Ok(4.0 * setup.confidence_exponent / setup.s0 / target / target)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionTime {
    pub seconds: f64,
    pub days: f64,
}

pub fn acquisition_time(n_pulses: f64, rep_rate: f64) -> Result<AcquisitionTime> {
    if !(rep_rate > 0.0) {
        return Err(Error::Domain(format!(
            "repetition rate must be positive, got {rep_rate}"
        )));
    }
    if !(n_pulses >= 0.0) {
        return Err(Error::Domain(format!(
            "pulse count must be non-negative, got {n_pulses}"
        )));
    }
    let seconds = n_pulses / rep_rate;
    Ok(AcquisitionTime {
        seconds,
        days: seconds / SECONDS_PER_DAY,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub setup: WeakDecoySetup,
    pub target: f64,
    /// Single-photon lower bound with the dark count known exactly.
    pub s1_lower: f64,
    /// Expected photon-induced clicks per decoy pulse, `1 − e^{-ημ_v}`.
    pub signal_per_pulse: f64,
    /// Expected dark clicks per decoy pulse, `s₀e^{-μ_v}`.
    pub dark_per_pulse: f64,
    pub required_pulses: f64,
    /// Relative dark-count fluctuation actually reached at `required_pulses`.
    pub achieved_fluctuation: f64,
    pub acquisition: AcquisitionTime,
    /// Acquisition takes at most one day.
    pub practical: bool,
}

pub fn feasibility_report(setup: &WeakDecoySetup, target: f64) -> Result<FeasibilityReport> {
    let n = required_pulses(setup, target)?;
    let acquisition = acquisition_time(n, setup.rep_rate)?;
    let settings = FluctuationSettings {
        confidence_exponent: setup.confidence_exponent,
        ..FluctuationSettings::default()
    };
    Ok(FeasibilityReport {
        setup: *setup,
        target,
        s1_lower: weak_decoy_s1_bound(setup),
        signal_per_pulse: -(-setup.eta * setup.mu_v).exp_m1(),
        dark_per_pulse: setup.s0 * (-setup.mu_v).exp(),
        required_pulses: n,
        achieved_fluctuation: relative_fluctuation(setup.s0, n, &settings)?,
        acquisition,
        practical: acquisition.days <= 1.0,
    })
}
