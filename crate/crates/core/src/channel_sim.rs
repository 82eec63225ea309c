//! Counting rates produced by a channel (with or without an eavesdropper).
//!
//! Every scenario is described by per-photon-number yields `y_n`, applied
//! identically to both signal classes, plus a vacuum-class rate `s₀`. The
//! class rate for intensity μ is `Σ P_n(μ) y_n`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::bound_engine::ObservedRates;
use crate::error::{Error, Result};
use crate::finite_stats::PulseBudget;
use crate::photon_stats::{multi_photon_probability, p0, ProtocolParams};

/// Default truncation of yields tables.
pub const DEFAULT_N_MAX: usize = 20;

/// How the detector dark count enters the signal-class rates of an honest
/// channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DarkCountModel {
    /// A click happens if a photon is detected or the detector fires on its
    /// own: `S_μ = 1 − (1−s₀)e^{-ημ}`.
    #[default]
    Independent,
    /// Dark counts show up in the vacuum class only; the signal classes click
    /// with `S_μ = 1 − e^{-ημ}`. The reference values of `decoy table1` are
    /// computed under this model.
    VacuumClassOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelScenario {
    /// Lossy channel with overall transmittance `eta`, no eavesdropper.
    NoEve {
        eta: f64,
        s0: f64,
        #[serde(default)]
        dark_counts: DarkCountModel,
    },
    /// Photon-number splitting: single photons blocked, a fraction `q` of
    /// multi-photon pulses forwarded losslessly.
    Pns { q: f64, s0: f64 },
    /// Arbitrary yields; `table[i]` is the counting rate of an `(i+1)`-photon
    /// pulse. Photon numbers beyond the table never click.
    Yields { s0: f64, table: Vec<f64> },
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidScenario(format!(
            "{name} = {v} is not a probability"
        )))
    }
}

impl ChannelScenario {
    pub fn no_eve(eta: f64, s0: f64) -> Result<Self> {
        Self::no_eve_with(eta, s0, DarkCountModel::Independent)
    }

    pub fn no_eve_with(eta: f64, s0: f64, dark_counts: DarkCountModel) -> Result<Self> {
        let s = Self::NoEve {
            eta,
            s0,
            dark_counts,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn pns(q: f64, s0: f64) -> Result<Self> {
        let s = Self::Pns { q, s0 };
        s.validate()?;
        Ok(s)
    }

    pub fn yields(s0: f64, table: Vec<f64>) -> Result<Self> {
        let s = Self::Yields { s0, table };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::NoEve { eta, s0, .. } => {
                check_probability("eta", *eta)?;
                check_probability("s0", *s0)
            }
            Self::Pns { q, s0 } => {
                check_probability("q", *q)?;
                check_probability("s0", *s0)
            }
            Self::Yields { s0, table } => {
                check_probability("s0", *s0)?;
                if table.len() < 2 {
                    return Err(Error::InvalidScenario(format!(
                        "yields table needs n_max >= 2 entries, got {}",
                        table.len()
                    )));
                }
                for (i, &y) in table.iter().enumerate() {
                    check_probability(&format!("s_{}", i + 1), y)?;
                }
                Ok(())
            }
        }
    }

    /// Rate observed in the vacuum class.
    pub fn s0(&self) -> f64 {
        match *self {
            Self::NoEve { s0, .. } | Self::Pns { s0, .. } | Self::Yields { s0, .. } => s0,
        }
    }

    /// Counting rate `y_n` of an n-photon pulse in a signal class.
    pub fn photon_yield(&self, n: u32) -> f64 {
        match self {
            Self::NoEve {
                eta,
                s0,
                dark_counts,
            } => {
                // 1 − (1−η)ⁿ
                let photon = -(f64::from(n) * (-eta).ln_1p()).exp_m1();
                match dark_counts {
                    DarkCountModel::Independent => *s0 + (1.0 - s0) * photon,
                    DarkCountModel::VacuumClassOnly => photon,
                }
            }
            Self::Pns { q, s0 } => match n {
                0 => *s0,
                1 => 0.0,
                _ => *q,
            },
            Self::Yields { s0, table } => match n {
                0 => *s0,
                _ => table.get(n as usize - 1).copied().unwrap_or(0.0),
            },
        }
    }

    /// Counting rate of a signal class of intensity `mu`.
    fn class_rate(&self, mu: f64) -> f64 {
        match self {
            Self::NoEve {
                eta,
                s0,
                dark_counts,
            } => {
                let photon = -(-eta * mu).exp_m1();
                match dark_counts {
                    DarkCountModel::Independent => s0 + (1.0 - s0) * photon,
                    DarkCountModel::VacuumClassOnly => photon,
                }
            }
            Self::Pns { q, s0 } => p0(mu) * s0 + q * multi_photon_probability(mu),
            Self::Yields { s0, table } => {
                p0(mu) * s0
                    + poisson_weights(mu, table.len())
                        .skip(1)
                        .zip(table)
                        .map(|((_, p), y)| p * y)
                        .sum::<f64>()
            }
        }
    }

    /// `Σ_{n≥2} P_n(μ) y_n`.
    fn multi_photon_rate(&self, mu: f64) -> f64 {
        match self {
            Self::Pns { q, .. } => q * multi_photon_probability(mu),
            Self::Yields { table, .. } => poisson_weights(mu, table.len())
                .skip(2)
                .zip(&table[1..])
                .map(|((_, p), y)| p * y)
                .sum(),
            Self::NoEve { .. } => {
                let n_max = series_cutoff(mu);
                poisson_weights(mu, n_max)
                    .skip(2)
                    .map(|(n, p)| p * self.photon_yield(n))
                    .sum()
            }
        }
    }
}

/// `(n, P_n(μ))` for `n = 0..=n_max`, by the incremental recurrence.
fn poisson_weights(mu: f64, n_max: usize) -> impl Iterator<Item = (u32, f64)> {
    let mut p = p0(mu);
    (0..=n_max as u32).map(move |n| {
        if n > 0 {
            p *= mu / f64::from(n);
        }
        (n, p)
    })
}

/// Photon number beyond which the Poisson tail is far below double precision.
fn series_cutoff(mu: f64) -> usize {
    (mu + 12.0 * mu.sqrt() + 40.0).ceil() as usize
}

/// Expected counting rates of the three classes.
pub fn expected_rates(
    scenario: &ChannelScenario,
    params: &ProtocolParams,
) -> Result<ObservedRates> {
    scenario.validate()?;
    ObservedRates::new(
        scenario.s0(),
        scenario.class_rate(params.mu()),
        scenario.class_rate(params.mu_prime()),
    )
}

/// Ground-truth tagged fractions `(Δ, Δ′)` of the two signal classes. A class
/// without clicks has tagged fraction 0.
pub fn true_delta(scenario: &ChannelScenario, params: &ProtocolParams) -> Result<(f64, f64)> {
    scenario.validate()?;
    let fraction = |mu: f64| {
        let total = scenario.class_rate(mu);
        if total > 0.0 {
            (scenario.multi_photon_rate(mu) / total).min(1.0)
        } else {
            0.0
        }
    };
    Ok((fraction(params.mu()), fraction(params.mu_prime())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub vacuum: u64,
    pub mu: u64,
    pub mu_prime: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedObservation {
    pub rates: ObservedRates,
    /// Click counts; absent for expected-value observations.
    pub counts: Option<ClassCounts>,
    pub budget: PulseBudget,
    pub seed: Option<u64>,
}

/// Draws per-class click counts from binomial distributions at the expected
/// rates.
///
/// The generator is ChaCha8 seeded with `seed`, and the classes are drawn in
/// the fixed order vacuum, Y_μ, Y_μ′, so a seed fully determines the result.
/// Binomial draws use the exact-distribution sampler of `rand_distr` for
/// every pulse count; no normal approximation is involved.
pub fn sample_observation(
    scenario: &ChannelScenario,
    params: &ProtocolParams,
    budget: &PulseBudget,
    seed: u64,
) -> Result<SimulatedObservation> {
    let expected = expected_rates(scenario, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: u128, p: f64| -> Result<(u64, f64)> {
        let n = u64::try_from(n).map_err(|_| {
            Error::Domain(format!(
                "pulse count {n} exceeds the sampler's 64-bit range"
            ))
        })?;
        if n == 0 {
            return Ok((0, 0.0));
        }
        let dist = Binomial::new(n, p).map_err(|e| Error::Domain(e.to_string()))?;
        let k = dist.sample(&mut rng);
        Ok((k, k as f64 / n as f64))
    };
    let (vacuum, s0) = draw(budget.n_vacuum, expected.s0)?;
    let (mu, s_mu) = draw(budget.n_mu, expected.s_mu)?;
    let (mu_prime, s_mu_prime) = draw(budget.n_mu_prime, expected.s_mu_prime)?;
    Ok(SimulatedObservation {
        rates: ObservedRates::new(s0, s_mu, s_mu_prime)?,
        counts: Some(ClassCounts {
            vacuum,
            mu,
            mu_prime,
        }),
        budget: *budget,
        seed: Some(seed),
    })
}

/// Seed for cell `index` of a run rooted at `root`: one SplitMix64 step
/// applied to `root + (index + 1)·0x9E3779B97F4A7C15`. Distinct cells get
/// well-separated ChaCha8 streams regardless of evaluation order.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon_stats::poisson_pmf;
    use approx::assert_relative_eq;

    fn params(mu: f64, mp: f64) -> ProtocolParams {
        ProtocolParams::new(mu, mp).unwrap()
    }

    #[test]
    fn no_eve_expected_rate_example() {
        let s = ChannelScenario::no_eve(1e-3, 1e-6).unwrap();
        let r = expected_rates(&s, &params(0.25, 0.4)).unwrap();
        let direct = 1.0 - (1.0 - 1e-6) * (-2.5e-4f64).exp();
        assert_relative_eq!(r.s_mu, direct, max_relative = 1e-11);
        assert_relative_eq!(r.s_mu, 2.5097e-4, max_relative = 1e-4);
        assert_eq!(r.s0, 1e-6);
    }

    #[test]
    fn dead_channel_has_no_clicks() {
        let s = ChannelScenario::no_eve(0.0, 0.0).unwrap();
        let r = expected_rates(&s, &params(0.25, 0.4)).unwrap();
        assert_eq!(r.s_mu, 0.0);
        assert_eq!(r.s_mu_prime, 0.0);
    }

    #[test]
    fn pns_rates_and_truth() {
        let s = ChannelScenario::pns(1.0, 0.0).unwrap();
        let p = params(0.3, 0.45);
        let r = expected_rates(&s, &p).unwrap();
        assert_relative_eq!(r.s_mu, 0.036_936_313_113_766_8, max_relative = 1e-13);
        assert_relative_eq!(
            r.s_mu_prime,
            1.0 - 1.45 * (-0.45f64).exp(),
            max_relative = 1e-13
        );
        assert_relative_eq!(r.s_mu_prime, 0.075_439_180_148_428_72, max_relative = 1e-13);
        assert_eq!(true_delta(&s, &p).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn no_multi_photon_yield_means_no_tagging() {
        let mut table = vec![0.0; DEFAULT_N_MAX];
        table[0] = 0.3;
        let s = ChannelScenario::yields(1e-6, table).unwrap();
        assert_eq!(true_delta(&s, &params(0.3, 0.45)).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn honest_truth_near_small_loss_limit() {
        let s = ChannelScenario::no_eve(1e-3, 0.0).unwrap();
        let (d, _) = true_delta(&s, &params(0.2, 0.39)).unwrap();
        assert!((0.181..=0.183).contains(&d), "{d}");
    }

    #[test]
    fn closed_form_rates_match_series() {
        for model in [DarkCountModel::Independent, DarkCountModel::VacuumClassOnly] {
            let s = ChannelScenario::no_eve_with(3e-3, 2e-6, model).unwrap();
            for &mu in &[0.1, 0.3, 0.8] {
                let series: f64 = (0..60)
                    .map(|n| poisson_pmf(n, mu).unwrap() * s.photon_yield(n))
                    .sum();
                let closed = s.class_rate(mu);
                assert_relative_eq!(closed, series, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn yields_truncation_is_negligible() {
        let table40: Vec<f64> = (1..=40).map(|n| 1.0 - 0.9f64.powi(n)).collect();
        let table20 = table40[..20].to_vec();
        let a = ChannelScenario::yields(1e-6, table20).unwrap();
        let b = ChannelScenario::yields(1e-6, table40).unwrap();
        for &mu in &[0.1, 0.5, 1.0] {
            assert!((a.class_rate(mu) - b.class_rate(mu)).abs() < 1e-15);
        }
    }

    #[test]
    fn honest_second_class_rate_is_larger() {
        let s = ChannelScenario::no_eve(1e-4, 1e-6).unwrap();
        let r = expected_rates(&s, &params(0.2, 0.39)).unwrap();
        assert!(r.s_mu_prime > r.s_mu);
    }

    #[test]
    fn scenario_validation() {
        assert!(ChannelScenario::no_eve(1.5, 0.0).is_err());
        assert!(ChannelScenario::pns(-0.1, 0.0).is_err());
        assert!(ChannelScenario::yields(0.0, vec![0.1]).is_err());
        assert!(ChannelScenario::yields(0.0, vec![0.1, 2.0]).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = ChannelScenario::no_eve(1e-3, 1e-6).unwrap();
        let p = params(0.25, 0.41);
        let b = PulseBudget::new(100_000_000, 100_000_000, 0).unwrap();
        let x = sample_observation(&s, &p, &b, 7).unwrap();
        let y = sample_observation(&s, &p, &b, 7).unwrap();
        assert_eq!(x, y);
        assert_eq!(x.counts.unwrap().vacuum, 0);
        let z = sample_observation(&s, &p, &b, 8).unwrap();
        assert_ne!(x.counts, z.counts);
    }

    #[test]
    fn sampled_rate_concentrates() {
        let s = ChannelScenario::no_eve(1e-3, 1e-6).unwrap();
        let p = params(0.25, 0.41);
        let n = 100_000_000u128;
        let b = PulseBudget::new(n, n, n).unwrap();
        let obs = sample_observation(&s, &p, &b, 2024).unwrap();
        let expected = expected_rates(&s, &p).unwrap();
        let sd = (expected.s_mu * (1.0 - expected.s_mu) / n as f64).sqrt();
        assert!((obs.rates.s_mu - expected.s_mu).abs() < 5.0 * sd);
        let counts = obs.counts.unwrap();
        assert!(u128::from(counts.mu) <= n && u128::from(counts.vacuum) <= n);
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
    }
}
