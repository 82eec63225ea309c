//! Finite pulse numbers.
//!
//! With finitely many pulses the counting rate of the same state may differ
//! between classes Y_μ and Y_μ′. For two random sub-populations of sizes N₁,
//! N₂ the probability that their rates differ by more than δ is below
//! `exp(−δ²N₀/(4s))`, `N₀ = min(N₁, N₂)`. Fixing that exponent to `E` gives the
//! relative fluctuation `r = √(4E/(s·N₀))`, which weakens the class-Y_μ′
//! constraint to
//!
//! ```text
//! c(1−r_c)s_c ≤ A·(S_μ′ − μ′e^{-μ′}(1−r₁)s₁ − e^{-μ′}(1−r₀)s₀)
//! ```
//!
//! Because `r₁` and `r_c` depend on the unknown rates themselves, the bound is
//! found as a self-consistent fixed point seeded from the asymptotic bound.

use serde::{Deserialize, Serialize};

use crate::bound_engine::{
    single_photon_lower, wang_asymptotic_bound, BoundReport, Method, ObservedRates,
};
use crate::error::{Error, Result};
use crate::photon_stats::{decompose, p0, p1, DecompositionCoefficients, ProtocolParams};
use crate::SolverOptions;

/// Pulses sent in each class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseBudget {
    pub n_mu: u128,
    pub n_mu_prime: u128,
    pub n_vacuum: u128,
}

impl PulseBudget {
    pub fn new(n_mu: u128, n_mu_prime: u128, n_vacuum: u128) -> Result<Self> {
        if n_mu == 0 || n_mu_prime == 0 {
            return Err(Error::Domain(
                "both signal classes need at least one pulse".into(),
            ));
        }
        Ok(Self {
            n_mu,
            n_mu_prime,
            n_vacuum,
        })
    }

    /// Same count in both signal classes.
    pub fn symmetric(n: u128, n_vacuum: u128) -> Result<Self> {
        Self::new(n, n, n_vacuum)
    }
}

/// Treatment of the vacuum-rate fluctuation between classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum R0Mode {
    Zero,
    Explicit(f64),
}

/// Which pulses count towards the sub-population sizes behind `r₁`, `r_c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubPopulation {
    /// Pulses of class Y_μ only: `N_μ·μe^{-μ}` single-photon and `N_μ·c`
    /// multi-photon pulses.
    SignalClass,
    /// The smaller of the class-Y_μ and class-Y_μ′ populations.
    MinOverClasses,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSettings {
    /// `E` in the violation probability `e^{-E}`.
    pub confidence_exponent: f64,
    pub r0_mode: R0Mode,
    pub sub_population: SubPopulation,
}

impl Default for FluctuationSettings {
    fn default() -> Self {
        Self {
            confidence_exponent: 25.0,
            r0_mode: R0Mode::Zero,
            sub_population: SubPopulation::SignalClass,
        }
    }
}

impl FluctuationSettings {
    pub fn new(
        confidence_exponent: f64,
        r0_mode: R0Mode,
        sub_population: SubPopulation,
    ) -> Result<Self> {
        let settings = Self {
            confidence_exponent,
            r0_mode,
            sub_population,
        };
        settings.check()?;
        Ok(settings)
    }

    fn check(&self) -> Result<()> {
        if !(self.confidence_exponent > 0.0 && self.confidence_exponent.is_finite()) {
            return Err(Error::Domain(format!(
                "confidence exponent must be positive, got {}",
                self.confidence_exponent
            )));
        }
        if let R0Mode::Explicit(r0) = self.r0_mode {
            if !(0.0..1.0).contains(&r0) {
                return Err(Error::Domain(format!("r0 must lie in [0, 1), got {r0}")));
            }
        }
        Ok(())
    }

    pub fn r0(&self) -> f64 {
        match self.r0_mode {
            R0Mode::Zero => 0.0,
            R0Mode::Explicit(r0) => r0,
        }
    }
}

/// `exp(−δ²N₀/(4s))`.
pub fn confidence_bound(delta_abs: f64, s: f64, n0: f64) -> Result<f64> {
    if !(delta_abs >= 0.0) {
        return Err(Error::Domain(format!(
            "deviation must be non-negative, got {delta_abs}"
        )));
    }
    if !(s > 0.0) {
        return Err(Error::Domain(format!(
            "counting rate must be positive, got {s}"
        )));
    }
    if !(n0 >= 1.0) {
        return Err(Error::Domain(format!(
            "sub-population must hold at least one pulse, got {n0}"
        )));
    }
    Ok((-(delta_abs * delta_abs) * n0 / (4.0 * s)).exp())
}

/// `r = √(4E) · √(1/(s·N₀))`; `10/√(s·N₀)` at the default `E = 25`.
pub fn relative_fluctuation(s: f64, n0: f64, settings: &FluctuationSettings) -> Result<f64> {
    settings.check()?;
    let product = s * n0;
    if !(product > 0.0) || !(s > 0.0) || !(n0 > 0.0) {
        return Err(Error::Domain(format!(
            "relative fluctuation needs s·N0 > 0 (s = {s}, N0 = {n0})"
        )));
    }
    Ok((4.0 * settings.confidence_exponent).sqrt() * (1.0 / product).sqrt())
}

/// Expected number of single-photon and multi-photon (ρ_c) pulses behind
/// `r₁` and `r_c`.
pub fn sub_population_sizes(
    params: &ProtocolParams,
    budget: &PulseBudget,
    settings: &FluctuationSettings,
) -> Result<(f64, f64)> {
    let k = decompose(params)?;
    Ok(sizes(params, budget, settings, &k))
}

fn sizes(
    params: &ProtocolParams,
    budget: &PulseBudget,
    settings: &FluctuationSettings,
    k: &DecompositionCoefficients,
) -> (f64, f64) {
    let n_mu = budget.n_mu as f64;
    let single = n_mu * p1(params.mu());
    let multi = n_mu * k.c;
    match settings.sub_population {
        SubPopulation::SignalClass => (single, multi),
        SubPopulation::MinOverClasses => {
            let n_mp = budget.n_mu_prime as f64;
            (
                single.min(n_mp * p1(params.mu_prime())),
                multi.min(n_mp * k.c * k.multi_ratio),
            )
        }
    }
}

/// One solve of the weakened constraint with `r₁`, `r_c` held fixed:
/// the largest `x = c·s_c` satisfying it together with the Y_μ identity.
/// `None` when the coefficient of `x` is not positive (μ, μ′ too close for
/// these fluctuations).
fn solve_with_fixed_fluctuations(
    rates: &ObservedRates,
    params: &ProtocolParams,
    r1: f64,
    rc: f64,
    r0: f64,
) -> Option<f64> {
    let (mu, mp) = (params.mu(), params.mu_prime());
    let coef = (1.0 - rc) - (1.0 - r1) * mu / mp;
    if !(coef > 0.0) {
        return None;
    }
    let rhs = params.two_photon_ratio()
        * (rates.s_mu_prime
            - p0(mp) * (1.0 - r0) * rates.s0
            - (1.0 - r1) * p1(mp) / p1(mu) * (rates.s_mu - p0(mu) * rates.s0));
    Some(rhs / coef)
}

/// Δ bound from the weakened constraint rearranged with `s₁` kept as a
/// given number rather than eliminated:
///
/// ```text
/// μ′e^{μ}[(1−r_c)μ′/μ − 1]·Δ ≤ μe^{μ′}S_μ′/S_μ − μ′e^{μ}
///                             + [(μ′−μ)s₀ + μμ′r₁s₁ + μr₀s₀]/S_μ
/// ```
///
/// At the fixed point of [`finite_bound`] both forms coincide.
pub fn fluctuation_weighted_bound(
    rates: &ObservedRates,
    params: &ProtocolParams,
    r1: f64,
    rc: f64,
    r0: f64,
    s1: f64,
) -> Option<f64> {
    let (mu, mp) = (params.mu(), params.mu_prime());
    let lhs = mp * mu.exp() * ((1.0 - rc) * mp / mu - 1.0);
    if !(lhs > 0.0) {
        return None;
    }
    let rhs = mu * mp.exp() * rates.s_mu_prime / rates.s_mu - mp * mu.exp()
        + ((mp - mu) * rates.s0 + mu * mp * r1 * s1 + mu * r0 * rates.s0) / rates.s_mu;
    Some(rhs / lhs)
}

/// Verified Δ for a finite pulse budget.
///
/// Starting from the asymptotic bound, alternates between evaluating `r₁`,
/// `r_c` at the current `s₁`, `s_c` and re-solving the weakened constraint,
/// until Δ moves by less than `tol` relative. Any relative fluctuation
/// reaching 1 makes the result vacuous.
pub fn finite_bound(
    rates: &ObservedRates,
    params: &ProtocolParams,
    budget: &PulseBudget,
    settings: &FluctuationSettings,
    opts: SolverOptions,
) -> Result<BoundReport> {
    settings.check()?;
    let asymptotic = wang_asymptotic_bound(rates, params)?;
    let k = decompose(params)?;
    let vacuous = || BoundReport::vacuous(Method::WangFinite, rates, k.c);
    if asymptotic.vacuous {
        return Ok(vacuous());
    }
    let (n_single, n_multi) = sizes(params, budget, settings, &k);
    let r0 = settings.r0();

    let mut x = asymptotic.delta_upper * rates.s_mu;
    for _ in 0..opts.max_iter {
        let s1 = single_photon_lower(x, rates, params);
        let sc = x / k.c;
        if !(s1 > 0.0 && sc > 0.0) {
            return Ok(vacuous());
        }
        let r1 = relative_fluctuation(s1, n_single, settings)?;
        let rc = relative_fluctuation(sc, n_multi, settings)?;
        if r1 >= 1.0 || rc >= 1.0 {
            return Ok(vacuous());
        }
        let Some(next) = solve_with_fixed_fluctuations(rates, params, r1, rc, r0) else {
            return Ok(vacuous());
        };
        let step = (next - x).abs();
        x = next;
        if step <= opts.tol * x.abs() {
            if x >= rates.s_mu {
                return Ok(vacuous());
            }
            return Ok(BoundReport::from_multi_photon_bound(
                Method::WangFinite,
                x,
                rates,
                params,
                k.c,
            ));
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        last: x / rates.s_mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn confidence_bound_examples() {
        assert_eq!(confidence_bound(0.0, 0.3, 10.0).unwrap(), 1.0);
        // δ²N₀/s = 100
        let s: f64 = 1e-4;
        let n0 = 1e10;
        let delta = (100.0 * s / n0).sqrt();
        assert_relative_eq!(
            confidence_bound(delta, s, n0).unwrap(),
            (-25.0f64).exp(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            confidence_bound(2e-6, 1e-4, 1e10).unwrap(),
            (-100.0f64).exp(),
            max_relative = 1e-12
        );
        assert!(confidence_bound(1e-3, 0.0, 10.0).is_err());
    }

    #[test]
    fn relative_fluctuation_examples() {
        let default = FluctuationSettings::default();
        assert_relative_eq!(
            relative_fluctuation(1e-4, 1e10, &default).unwrap(),
            0.01,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            relative_fluctuation(1.0, 100.0, &default).unwrap(),
            1.0,
            max_relative = 1e-15
        );
        let strict = FluctuationSettings {
            confidence_exponent: 100.0,
            ..default
        };
        assert_relative_eq!(
            relative_fluctuation(1e-4, 1e10, &strict).unwrap(),
            0.02,
            max_relative = 1e-14
        );
        assert!(relative_fluctuation(0.0, 1e10, &default).is_err());
    }

    #[test]
    fn relative_fluctuation_sits_at_the_confidence_target() {
        // δ = r·s must give exactly exp(−E)
        let settings = FluctuationSettings::default();
        let (s, n0) = (3.7e-4, 2.2e9);
        let r = relative_fluctuation(s, n0, &settings).unwrap();
        assert_relative_eq!(
            confidence_bound(r * s, s, n0).unwrap(),
            (-25.0f64).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn settings_validation() {
        assert!(FluctuationSettings::new(0.0, R0Mode::Zero, SubPopulation::SignalClass).is_err());
        assert!(
            FluctuationSettings::new(25.0, R0Mode::Explicit(1.0), SubPopulation::SignalClass)
                .is_err()
        );
        assert!(PulseBudget::new(0, 1, 0).is_err());
    }

    fn honest_rates(mu: f64, mp: f64, eta: f64, s0: f64) -> ObservedRates {
        let rate = |m: f64| -(-eta * m).exp_m1();
        ObservedRates::new(s0, rate(mu), rate(mp)).unwrap()
    }

    #[test]
    fn finite_bound_exceeds_asymptotic_and_self_consistent() {
        let params = ProtocolParams::new(0.3, 0.45).unwrap();
        let rates = honest_rates(0.3, 0.45, 1e-4, 1e-6);
        let budget = PulseBudget::symmetric(80_000_000_000, 4_000_000_000).unwrap();
        let settings = FluctuationSettings::default();
        let fin = finite_bound(
            &rates,
            &params,
            &budget,
            &settings,
            SolverOptions::default(),
        )
        .unwrap();
        let asym = wang_asymptotic_bound(&rates, &params).unwrap();
        assert!(fin.delta_upper > asym.delta_upper);
        assert_eq!(fin.method, Method::WangFinite);

        let (n1, nc) = sub_population_sizes(&params, &budget, &settings).unwrap();
        let r1 = relative_fluctuation(fin.s1_lower, n1, &settings).unwrap();
        let rc = relative_fluctuation(fin.sc_upper, nc, &settings).unwrap();
        let again =
            solve_with_fixed_fluctuations(&rates, &params, r1, rc, 0.0).unwrap() / rates.s_mu;
        assert!((again - fin.delta_upper).abs() < 1e-9 * fin.delta_upper);

        let displayed =
            fluctuation_weighted_bound(&rates, &params, r1, rc, 0.0, fin.s1_lower).unwrap();
        assert_relative_eq!(displayed, fin.delta_upper, max_relative = 1e-8);
    }

    #[test]
    fn displayed_form_reduces_to_closed_form_without_fluctuations() {
        let params = ProtocolParams::new(0.25, 0.41).unwrap();
        let rates = honest_rates(0.25, 0.41, 1e-3, 1e-6);
        let asym = wang_asymptotic_bound(&rates, &params).unwrap();
        let shown = fluctuation_weighted_bound(&rates, &params, 0.0, 0.0, 0.0, 123.0).unwrap();
        assert_relative_eq!(shown, asym.delta_upper, max_relative = 1e-12);
    }

    #[test]
    fn tiny_budget_is_vacuous() {
        let params = ProtocolParams::new(0.3, 0.45).unwrap();
        let rates = honest_rates(0.3, 0.45, 1e-3, 1e-6);
        let budget = PulseBudget::symmetric(1_000, 0).unwrap();
        let r = finite_bound(
            &rates,
            &params,
            &budget,
            &FluctuationSettings::default(),
            SolverOptions::default(),
        )
        .unwrap();
        assert!(r.vacuous);
        assert_eq!(r.delta_upper, 1.0);
    }

    #[test]
    fn explicit_r0_loosens_the_bound() {
        let params = ProtocolParams::new(0.3, 0.45).unwrap();
        let rates = honest_rates(0.3, 0.45, 1e-4, 1e-6);
        let budget = PulseBudget::symmetric(80_000_000_000, 4_000_000_000).unwrap();
        let base = FluctuationSettings::default();
        let loose = FluctuationSettings {
            r0_mode: R0Mode::Explicit(0.1),
            ..base
        };
        let a = finite_bound(&rates, &params, &budget, &base, SolverOptions::default()).unwrap();
        let b = finite_bound(&rates, &params, &budget, &loose, SolverOptions::default()).unwrap();
        assert!(b.delta_upper > a.delta_upper);
    }

    #[test]
    fn min_over_classes_never_tighter() {
        let params = ProtocolParams::new(0.3, 0.45).unwrap();
        let rates = honest_rates(0.3, 0.45, 1e-3, 1e-6);
        let budget = PulseBudget::new(10_000_000_000, 2_000_000_000, 0).unwrap();
        let base = FluctuationSettings::default();
        let strict = FluctuationSettings {
            sub_population: SubPopulation::MinOverClasses,
            ..base
        };
        let a = finite_bound(&rates, &params, &budget, &base, SolverOptions::default()).unwrap();
        let b = finite_bound(&rates, &params, &budget, &strict, SolverOptions::default()).unwrap();
        assert!(b.delta_upper >= a.delta_upper);
    }
}
