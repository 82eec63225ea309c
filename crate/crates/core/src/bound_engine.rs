//! Asymptotic verification of the tagged fraction.
//!
//! All bounds work on `x = c·s_c`, the multi-photon contribution to the
//! class-Y_μ counting rate, and report `Δ = x / S_μ`. Two linear facts drive
//! everything:
//!
//! * class Y_μ identity: `e^{-μ}s₀ + μe^{-μ}s₁ + x = S_μ`
//! * class Y_μ′ inequality (with `s_d ≥ 0` dropped):
//!   `x ≤ A·(S_μ′ − e^{-μ′}s₀ − μ′e^{-μ′}s₁)`, `A = μ²e^{-μ}/(μ′²e^{-μ′})`
//!
//! A report is *vacuous* when no positive single-photon rate can be
//! certified; its Δ is then reported as exactly 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photon_stats::{decompose, p0, p1, ProtocolParams};
use crate::SolverOptions;

/// Counting rates (clicks per pulse sent) of the three pulse classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedRates {
    /// Vacuum class Y₀.
    pub s0: f64,
    /// Class Y_μ.
    pub s_mu: f64,
    /// Class Y_μ′.
    pub s_mu_prime: f64,
}

impl ObservedRates {
    pub fn new(s0: f64, s_mu: f64, s_mu_prime: f64) -> Result<Self> {
        let rates = Self {
            s0,
            s_mu,
            s_mu_prime,
        };
        rates.check()?;
        Ok(rates)
    }

    fn check(&self) -> Result<()> {
        for (name, v) in [
            ("s0", self.s0),
            ("s_mu", self.s_mu),
            ("s_mu_prime", self.s_mu_prime),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidRates(format!(
                    "{name} = {v} is not in [0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// No clicks at all in class Y_μ′; bounds on Δ still exist but Δ′ does not.
    pub fn is_degenerate(&self) -> bool {
        self.s_mu_prime == 0.0
    }

    /// Bounds divide by `S_μ`; zero clicks in Y_μ leave nothing to verify.
    pub(crate) fn require_signal(&self) -> Result<()> {
        self.check()?;
        if self.s_mu <= 0.0 {
            return Err(Error::InvalidRates(
                "s_mu must be positive to bound the tagged fraction".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    HwangCrude,
    HwangOptimized,
    WangAsymptotic,
    WangFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Upper bound on Δ, the tagged fraction of class Y_μ counts.
    pub delta_upper: f64,
    /// Upper bound on Δ′, the tagged fraction of class Y_μ′ counts.
    pub delta_prime_upper: f64,
    pub s1_lower: f64,
    pub sc_upper: f64,
    pub method: Method,
    /// Some raw value was pulled back into its admissible range.
    pub clamped: bool,
    /// Δ = 1: no security statement is possible.
    pub vacuous: bool,
}

impl BoundReport {
    pub(crate) fn vacuous(method: Method, rates: &ObservedRates, c: f64) -> Self {
        Self {
            delta_upper: 1.0,
            delta_prime_upper: 1.0,
            s1_lower: 0.0,
            sc_upper: rates.s_mu / c,
            method,
            clamped: true,
            vacuous: true,
        }
    }

    /// Builds a report from a verified bound `x` on `c·s_c`. Negative values
    /// are floored at zero; an `x` leaving no room for single photons makes
    /// the report vacuous.
    pub(crate) fn from_multi_photon_bound(
        method: Method,
        x_raw: f64,
        rates: &ObservedRates,
        params: &ProtocolParams,
        c: f64,
    ) -> Self {
        let mut clamped = false;
        let x = if x_raw < 0.0 {
            clamped = true;
            0.0
        } else {
            x_raw
        };
        let s1 = single_photon_lower(x, rates, params);
        if !(s1 > 0.0) {
            return Self::vacuous(method, rates, c);
        }
        let delta = x / rates.s_mu;
        let (delta_prime, dp_clamped) = delta_prime_clamped(delta, rates, params);
        Self {
            delta_upper: delta,
            delta_prime_upper: delta_prime,
            s1_lower: s1,
            sc_upper: x / c,
            method,
            clamped: clamped || dp_clamped,
            vacuous: false,
        }
    }
}

/// `s₁ ≥ (S_μ − e^{-μ}s₀ − x) / (μe^{-μ})`, from the class-Y_μ identity.
pub(crate) fn single_photon_lower(x: f64, rates: &ObservedRates, params: &ProtocolParams) -> f64 {
    let mu = params.mu();
    (rates.s_mu - p0(mu) * rates.s0 - x) / p1(mu)
}

/// `A·(S_μ′ − e^{-μ′}s₀ − μ′e^{-μ′}s₁)`.
fn multi_photon_upper(s1: f64, rates: &ObservedRates, params: &ProtocolParams) -> f64 {
    let mp = params.mu_prime();
    params.two_photon_ratio() * (rates.s_mu_prime - p0(mp) * rates.s0 - p1(mp) * s1)
}

/// Crude bound: `Δ ≤ μ²e^{-μ}S_μ′ / (μ′²e^{-μ′}S_μ)`, taking no credit for
/// vacuum or single-photon counts in class Y_μ′.
pub fn hwang_bound(rates: &ObservedRates, params: &ProtocolParams) -> Result<BoundReport> {
    rates.require_signal()?;
    let c = decompose(params)?.c;
    let x = params.two_photon_ratio() * rates.s_mu_prime;
    Ok(BoundReport::from_multi_photon_bound(
        Method::HwangCrude,
        x,
        rates,
        params,
        c,
    ))
}

/// Crude bound with the second intensity at its optimum `μ′ = 1`, assuming
/// an honest channel (`S_μ′/S_μ = μ′/μ`): `Δ ≤ μe^{1−μ}`.
pub fn hwang_optimized(mu: f64) -> Result<f64> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Domain(format!(
            "optimised crude bound needs 0 < mu < 1, got {mu}"
        )));
    }
    Ok((mu * (1.0 - mu).exp()).min(1.0))
}

/// Closed-form solution of the coupled Y_μ / Y_μ′ constraints:
///
/// ```text
/// Δ ≤ μ/(μ′−μ) · (μe^{-μ}S_μ′ / (μ′e^{-μ′}S_μ) − 1) + μe^{-μ}s₀ / (μ′S_μ)
/// ```
pub fn wang_asymptotic_bound(
    rates: &ObservedRates,
    params: &ProtocolParams,
) -> Result<BoundReport> {
    rates.require_signal()?;
    let c = decompose(params)?.c;
    let delta = wang_closed_form(rates, params);
    Ok(BoundReport::from_multi_photon_bound(
        Method::WangAsymptotic,
        delta * rates.s_mu,
        rates,
        params,
        c,
    ))
}

/// Unclamped closed form.
pub(crate) fn wang_closed_form(rates: &ObservedRates, params: &ProtocolParams) -> f64 {
    let (mu, mp) = (params.mu(), params.mu_prime());
    let single_ratio = (mu / mp) * (mp - mu).exp();
    mu / (mp - mu) * (single_ratio * rates.s_mu_prime / rates.s_mu - 1.0)
        + p1(mu) * rates.s0 / (mp * rates.s_mu)
}

/// Fixed point of the alternating s_c / s₁ refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScS1Solution {
    pub sc_upper: f64,
    pub s1_lower: f64,
    pub iterations: usize,
    /// The crude bound already leaves no room for single photons.
    pub vacuous: bool,
}

/// Solves the coupled constraints by alternation: start from the crude
/// bound on `s_c` with `s₁ = 0`, then repeatedly tighten `s₁` from the Y_μ
/// identity and `s_c` from the Y_μ′ inequality.
///
/// The map is affine with slope `μ/μ′`, so the distance to the fixed point
/// after a step of size `h` is at most `h·q/(1−q)`; iteration stops once
/// that is below `tol` relative.
pub fn iterate_sc_s1(
    rates: &ObservedRates,
    params: &ProtocolParams,
    opts: SolverOptions,
) -> Result<ScS1Solution> {
    rates.require_signal()?;
    let c = decompose(params)?.c;
    let q = params.mu() / params.mu_prime();

    let crude = multi_photon_upper(0.0, rates, params).max(0.0);
    let mut x = crude;
    for iteration in 1..=opts.max_iter {
        let s1 = single_photon_lower(x, rates, params);
        if s1 < 0.0 {
            return Ok(ScS1Solution {
                sc_upper: crude / c,
                s1_lower: 0.0,
                iterations: iteration,
                vacuous: true,
            });
        }
        let next = multi_photon_upper(s1, rates, params).max(0.0);
        let step = (next - x).abs();
        x = next;
        if x == 0.0 || step * q / (1.0 - q) <= opts.tol * x {
            return Ok(ScS1Solution {
                sc_upper: x / c,
                s1_lower: single_photon_lower(x, rates, params).max(0.0),
                iterations: iteration,
                vacuous: false,
            });
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        last: x / rates.s_mu,
    })
}

/// Upper bound on Δ′ given an upper bound on Δ.
///
/// Single-photon counts certified in class Y_μ carry over to class Y_μ′:
/// `Δ′ ≤ 1 − (μ′e^{-μ′}s₁ + e^{-μ′}s₀)/S_μ′` with
/// `s₁ = (S_μ(1−Δ) − e^{-μ}s₀)/(μe^{-μ})`. When `S_μ′/S_μ = μ′/μ` this is
/// `1 − (1 − Δ − e^{-μ}s₀/S_μ)e^{μ−μ′} − e^{-μ′}s₀/S_μ′`.
pub fn delta_prime_bound(delta: f64, rates: &ObservedRates, params: &ProtocolParams) -> f64 {
    delta_prime_clamped(delta, rates, params).0
}

fn delta_prime_clamped(delta: f64, rates: &ObservedRates, params: &ProtocolParams) -> (f64, bool) {
    if !(0.0..1.0).contains(&delta) || rates.s_mu_prime <= 0.0 || rates.s_mu <= 0.0 {
        return (1.0, true);
    }
    let s1 = single_photon_lower(delta * rates.s_mu, rates, params);
    if !(s1 > 0.0) {
        return (1.0, true);
    }
    let mp = params.mu_prime();
    let raw = 1.0 - (p1(mp) * s1 + p0(mp) * rates.s0) / rates.s_mu_prime;
    if raw < 0.0 {
        (0.0, true)
    } else if raw > 1.0 {
        (1.0, true)
    } else {
        (raw, false)
    }
}
