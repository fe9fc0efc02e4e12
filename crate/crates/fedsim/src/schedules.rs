//! Step-size rules: fixed, diminishing, and step-decay.
//!
//! Naming note, since the source material overloads one Greek letter three
//! ways: `decay_base` is the multiplicative step-decay factor, `contraction`
//! (in [`crate::compressors`]) is the compressor quality scalar, and
//! `local_step` is the per-round step before any division by the local
//! iteration count. See the README glossary.

use crate::error::{Error, Result};

/// A step-size rule gamma_k.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSpec {
    /// gamma_k = c / sqrt(K) for all k < K.
    Fixed { c: f64, horizon: usize },
    /// gamma_k = c / (k+1)^nu with nu in (1/2, 1).
    Diminishing { c: f64, nu: f64 },
    /// gamma_k = gamma0 / decay_base^floor(k / period).
    StepDecay {
        gamma0: f64,
        decay_base: f64,
        period: usize,
    },
}

impl ScheduleSpec {
    /// Validates the variant parameters, collecting every problem found.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        match *self {
            ScheduleSpec::Fixed { c, horizon } => {
                if c <= 0.0 {
                    errs.push(format!("schedule.c must be positive, got {c}"));
                }
                if horizon == 0 {
                    errs.push("schedule horizon K must be at least 1".into());
                }
            }
            ScheduleSpec::Diminishing { c, nu } => {
                if c <= 0.0 {
                    errs.push(format!("schedule.c must be positive, got {c}"));
                }
                if !(nu > 0.5 && nu < 1.0) {
                    errs.push(format!("schedule.nu must lie in (1/2, 1), got {nu}"));
                }
            }
            ScheduleSpec::StepDecay {
                gamma0,
                decay_base,
                period,
            } => {
                if gamma0 <= 0.0 {
                    errs.push(format!("schedule.gamma0 must be positive, got {gamma0}"));
                }
                if decay_base <= 1.0 {
                    errs.push(format!(
                        "schedule.decay_base must exceed 1, got {decay_base}"
                    ));
                }
                if period == 0 {
                    errs.push("schedule.period must be at least 1".into());
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Closed-form gamma_k. Any proposition step-size cap is the caller's job.
pub fn step_size(s: &ScheduleSpec, k: usize) -> Result<f64> {
    s.validate()?;
    match *s {
        ScheduleSpec::Fixed { c, horizon } => {
            if k >= horizon {
                return Err(Error::Range { index: k, horizon });
            }
            Ok(c / (horizon as f64).sqrt())
        }
        ScheduleSpec::Diminishing { c, nu } => Ok(c / ((k + 1) as f64).powf(nu)),
        ScheduleSpec::StepDecay {
            gamma0,
            decay_base,
            period,
        } => Ok(gamma0 / decay_base.powi((k / period) as i32)),
    }
}

/// The decay period the step-decay convergence bound assumes:
/// 2K / log_base(K), rounded to the nearest positive integer. The
/// experimental presets use their own explicit period instead.
pub fn theoretical_decay_period(horizon: usize, decay_base: f64) -> Result<usize> {
    if horizon < 2 {
        return Err(Error::config(format!(
            "theoretical decay period needs K >= 2, got {horizon}"
        )));
    }
    if decay_base <= 1.0 {
        return Err(Error::config(format!(
            "decay_base must exceed 1, got {decay_base}"
        )));
    }
    let k = horizon as f64;
    let period = 2.0 * k / (k.ln() / decay_base.ln());
    Ok((period.round() as usize).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_schedule_reference_setting() {
        // c = 2, K = 400 -> 0.1 at every k.
        let s = ScheduleSpec::Fixed { c: 2.0, horizon: 400 };
        for k in [0, 1, 200, 399] {
            assert_eq!(step_size(&s, k).unwrap(), 0.1);
        }
    }

    #[test]
    fn fixed_schedule_rejects_out_of_horizon() {
        let s = ScheduleSpec::Fixed { c: 2.0, horizon: 400 };
        assert!(matches!(step_size(&s, 400), Err(Error::Range { .. })));
    }

    #[test]
    fn diminishing_first_step_is_c() {
        let s = ScheduleSpec::Diminishing { c: 0.8, nu: 0.51 };
        assert_eq!(step_size(&s, 0).unwrap(), 0.8);
    }

    #[test]
    fn diminishing_rejects_nu_out_of_range() {
        for nu in [0.5, 1.0, 0.2, 1.3] {
            let s = ScheduleSpec::Diminishing { c: 0.8, nu };
            assert!(matches!(step_size(&s, 0), Err(Error::Config(_))), "nu={nu}");
        }
    }

    #[test]
    fn step_decay_reference_setting() {
        let s = ScheduleSpec::StepDecay {
            gamma0: 0.8,
            decay_base: 2.0,
            period: 50,
        };
        assert_eq!(step_size(&s, 75).unwrap(), 0.4);
        assert_eq!(step_size(&s, 0).unwrap(), 0.8);
        assert_eq!(step_size(&s, 49).unwrap(), 0.8);
        assert_eq!(step_size(&s, 100).unwrap(), 0.2);
    }

    #[test]
    fn theoretical_period_values() {
        // 2*400 / log2(400) = 92.55... -> 93
        assert_eq!(theoretical_decay_period(400, 2.0).unwrap(), 93);
        assert_eq!(theoretical_decay_period(4, 2.0).unwrap(), 4);
        assert_eq!(theoretical_decay_period(16, 4.0).unwrap(), 16);
        assert!(theoretical_decay_period(1, 2.0).is_err());
    }

    proptest::proptest! {
        // Tail sum: sum_{k<K} gamma_k^2 <= 2 nu c^2 / (2 nu - 1).
        #[test]
        fn prop_diminishing_tail_sum(
            c in 0.05f64..5.0,
            nu in 0.51f64..0.99,
            horizon in 1usize..3000,
        ) {
            let s = ScheduleSpec::Diminishing { c, nu };
            let sum: f64 = (0..horizon)
                .map(|k| {
                    let g = step_size(&s, k).unwrap();
                    g * g
                })
                .sum();
            proptest::prop_assert!(sum <= 2.0 * nu * c * c / (2.0 * nu - 1.0));
        }

        // Fixed-step growth: (1 + a gamma^2)^K <= exp(a c^2) with gamma = c/sqrt(K).
        #[test]
        fn prop_fixed_growth_bound(
            a in 0.01f64..5.0,
            c in 0.05f64..5.0,
            horizon in 1usize..10_000,
        ) {
            let gamma = c / (horizon as f64).sqrt();
            let lhs = (horizon as f64) * (a * gamma * gamma).ln_1p();
            proptest::prop_assert!(lhs <= a * c * c);
        }

        // Monotone non-increase for the two decaying variants.
        #[test]
        fn prop_monotone_non_increasing(
            c in 0.05f64..5.0,
            nu in 0.51f64..0.99,
            gamma0 in 0.05f64..5.0,
            base in 1.1f64..8.0,
            period in 1usize..60,
            k in 0usize..500,
        ) {
            let dim = ScheduleSpec::Diminishing { c, nu };
            proptest::prop_assert!(
                step_size(&dim, k + 1).unwrap() <= step_size(&dim, k).unwrap()
            );
            let dec = ScheduleSpec::StepDecay { gamma0, decay_base: base, period };
            proptest::prop_assert!(
                step_size(&dec, k + 1).unwrap() <= step_size(&dec, k).unwrap()
            );
        }
    }
}
