//! Key rate per sifted bit when a fraction Δ of the counts is tagged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `H(x) = −x log₂x − (1−x) log₂(1−x)`, with `H(0) = H(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!(
            "binary entropy needs x in [0, 1], got {x}"
        )));
    }
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    Ok(term(x) + term(1.0 - x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateInput {
    delta: f64,
    qber: f64,
}

impl KeyRateInput {
    pub fn new(delta: f64, qber: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::Domain(format!(
                "tagged fraction must lie in [0, 1], got {delta}"
            )));
        }
        if !(0.0..=0.5).contains(&qber) {
            return Err(Error::Domain(format!(
                "error rate must lie in [0, 0.5], got {qber}"
            )));
        }
        Ok(Self { delta, qber })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn qber(&self) -> f64 {
        self.qber
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRate {
    pub rate: f64,
    /// The raw rate was negative (or undefined) and reported as zero.
    pub clamped: bool,
}

/// `r = 1 − Δ − H(t) − (1−Δ) H(t/(1−Δ))`, floored at zero.
pub fn gllp_rate(input: &KeyRateInput) -> KeyRate {
    let (delta, t) = (input.delta, input.qber);
    let untagged = 1.0 - delta;
    let zero = KeyRate {
        rate: 0.0,
        clamped: true,
    };
    if untagged <= 0.0 {
        return KeyRate {
            rate: 0.0,
            clamped: t > 0.0,
        };
    }
    let t_untagged = t / untagged;
    if t_untagged > 0.5 {
        return zero;
    }
    // both arguments were range-checked above
    let h_t = binary_entropy(t).unwrap_or(1.0);
    let h_u = binary_entropy(t_untagged).unwrap_or(1.0);
    let raw = untagged - h_t - untagged * h_u;
    if raw < 0.0 {
        zero
    } else {
        KeyRate {
            rate: raw,
            clamped: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_relative_eq!(
            binary_entropy(0.01).unwrap(),
            0.080_793_135_895_911_17,
            max_relative = 1e-13
        );
        assert!(binary_entropy(-0.01).is_err());
        assert!(binary_entropy(1.01).is_err());
    }

    #[test]
    fn rate_examples() {
        let r = gllp_rate(&KeyRateInput::new(0.0, 0.0).unwrap());
        assert_eq!(
            r,
            KeyRate {
                rate: 1.0,
                clamped: false
            }
        );
        let r = gllp_rate(&KeyRateInput::new(0.309, 0.01).unwrap());
        assert!((r.rate - 0.5348).abs() < 5e-5, "{}", r.rate);
        let r = gllp_rate(&KeyRateInput::new(1.0, 0.0).unwrap());
        assert_eq!(r.rate, 0.0);
        let r = gllp_rate(&KeyRateInput::new(0.9, 0.06).unwrap());
        assert!(r.clamped && r.rate == 0.0);
    }

    #[test]
    fn input_validation() {
        assert!(KeyRateInput::new(1.2, 0.0).is_err());
        assert!(KeyRateInput::new(0.2, 0.6).is_err());
    }

    proptest! {
        #[test]
        fn entropy_symmetric(x in 0.0f64..=1.0) {
            let a = binary_entropy(x).unwrap();
            let b = binary_entropy(1.0 - x).unwrap();
            prop_assert!((a - b).abs() < 1e-14);
        }

        #[test]
        fn error_free_rate_is_untagged_fraction(delta in 0.0f64..=1.0) {
            let r = gllp_rate(&KeyRateInput::new(delta, 0.0).unwrap());
            prop_assert_eq!(r.rate, 1.0 - delta);
        }

        #[test]
        fn rate_monotone(d in 0.0f64..0.9, dd in 0.0f64..0.1, t in 0.0f64..0.2, dt in 0.0f64..0.05) {
            let base = gllp_rate(&KeyRateInput::new(d, t).unwrap()).rate;
            let more_tagged = gllp_rate(&KeyRateInput::new(d + dd, t).unwrap()).rate;
            let more_errors = gllp_rate(&KeyRateInput::new(d, t + dt).unwrap()).rate;
            prop_assert!(more_tagged <= base + 1e-12);
            prop_assert!(more_errors <= base + 1e-12);
        }
    }
}
