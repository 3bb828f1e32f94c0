//! Step-size schedules and their summability validation.
//!
//! Valid schedules must have divergent step sums, square-summable steps, and
//! a vanishing slow-to-fast ratio. For power-law specs these are decided
//! analytically by the p-series tests; for user tables they are estimated
//! over the horizon by a log-log slope fit, with a warning flag that the
//! tails are unverifiable.

use std::sync::Arc;

use crate::error::{Error, Result};

/// One step-size sequence.
#[derive(Debug, Clone)]
pub enum StepSpec {
    /// `scale * (n + 1)^(-exponent)`
    PowerLaw { scale: f64, exponent: f64 },
    /// Explicit per-step values.
    Table(Arc<Vec<f64>>),
}

impl StepSpec {
    pub fn power(scale: f64, exponent: f64) -> Self {
        StepSpec::PowerLaw { scale, exponent }
    }

    pub fn value(&self, n: usize) -> f64 {
        match self {
            StepSpec::PowerLaw { scale, exponent } => {
                scale * ((n + 1) as f64).powf(-exponent)
            }
            StepSpec::Table(t) => t[n.min(t.len() - 1)],
        }
    }
}

/// Summability verdicts. Set only by [`validate_schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct ScheduleFlags {
    /// Fast step sums diverge.
    pub robbins_monro_a: bool,
    /// Slow step sums diverge.
    pub robbins_monro_b: bool,
    /// Squared steps are summable (jointly).
    pub square_summable: bool,
    /// slow/fast ratio vanishes.
    pub ratio_vanishes: bool,
    /// Flags were estimated from a finite table; tails are unverifiable.
    pub tail_estimated: bool,
}

/// A validated pair of step sequences.
#[derive(Debug, Clone)]
pub struct StepSchedule {
    fast: StepSpec,
    slow: StepSpec,
    pub flags: ScheduleFlags,
}

impl StepSchedule {
    pub fn fast_step(&self, n: usize) -> f64 {
        self.fast.value(n)
    }

    pub fn slow_step(&self, n: usize) -> f64 {
        self.slow.value(n)
    }

    pub fn fast_spec(&self) -> &StepSpec {
        &self.fast
    }

    pub fn slow_spec(&self) -> &StepSpec {
        &self.slow
    }

    /// The default pair: fast `(n+1)^-0.6`, slow `(n+1)^-0.9`.
    pub fn default_pair() -> Self {
        validate_schedule(
            StepSpec::power(1.0, crate::defaults::FAST_EXPONENT),
            StepSpec::power(1.0, crate::defaults::SLOW_EXPONENT),
            1,
        )
        .expect("default schedule is valid")
    }

    /// Wrap step specs without validating; every flag stays false. For clock
    /// arithmetic and diagnostics on pairs that are not a valid two-scale
    /// schedule.
    pub fn unchecked(fast: StepSpec, slow: StepSpec) -> Self {
        Self {
            fast,
            slow,
            flags: ScheduleFlags {
                robbins_monro_a: false,
                robbins_monro_b: false,
                square_summable: false,
                ratio_vanishes: false,
                tail_estimated: true,
            },
        }
    }
}

/// Validate a step pair, deciding the four summability flags.
///
/// `horizon` is only consulted for table specs, which are checked over the
/// steps the run will actually use.
pub fn validate_schedule(fast: StepSpec, slow: StepSpec, horizon: usize) -> Result<StepSchedule> {
    let (fast_exp, fast_est) = effective_exponent(&fast, horizon, "fast")?;
    let (slow_exp, slow_est) = effective_exponent(&slow, horizon, "slow")?;
    let flags = ScheduleFlags {
        robbins_monro_a: fast_exp <= 1.0 + 1e-12,
        robbins_monro_b: slow_exp <= 1.0 + 1e-12,
        square_summable: fast_exp > 0.5 && slow_exp > 0.5,
        ratio_vanishes: slow_exp > fast_exp + 1e-12,
        tail_estimated: fast_est || slow_est,
    };
    if !flags.robbins_monro_a {
        return Err(Error::InvalidSchedule {
            flag: "robbins_monro_a",
            detail: format!("fast exponent {fast_exp} > 1 makes the fast step sum finite"),
        });
    }
    if !flags.robbins_monro_b {
        return Err(Error::InvalidSchedule {
            flag: "robbins_monro_b",
            detail: format!("slow exponent {slow_exp} > 1 makes the slow step sum finite"),
        });
    }
    if !flags.square_summable {
        return Err(Error::InvalidSchedule {
            flag: "square_summable",
            detail: format!(
                "squared steps with exponent min({fast_exp}, {slow_exp}) <= 1/2 are not summable"
            ),
        });
    }
    if !flags.ratio_vanishes {
        return Err(Error::InvalidSchedule {
            flag: "ratio_vanishes",
            detail: format!(
                "slow/fast exponent pair ({slow_exp}, {fast_exp}) does not drive b(n)/a(n) to 0"
            ),
        });
    }
    Ok(StepSchedule { fast, slow, flags })
}

/// Exponent used by the p-series tests: exact for power laws, a fitted
/// log-log slope over the horizon tail for tables.
fn effective_exponent(
    spec: &StepSpec,
    horizon: usize,
    which: &'static str,
) -> Result<(f64, bool)> {
    match spec {
        StepSpec::PowerLaw { scale, exponent } => {
            if scale.is_nan() || *scale <= 0.0 || !scale.is_finite() || !exponent.is_finite() || *exponent < 0.0 {
                return Err(Error::InvalidSchedule {
                    flag: "positivity",
                    detail: format!("{which} power law needs scale > 0 and exponent >= 0"),
                });
            }
            Ok((*exponent, false))
        }
        StepSpec::Table(values) => {
            let n = values.len().min(horizon.max(2));
            if n < 2 {
                return Err(Error::InvalidSchedule {
                    flag: "positivity",
                    detail: format!("{which} table needs at least 2 entries"),
                });
            }
            let head = &values[..n];
            if head.iter().any(|&v| v.is_nan() || v <= 0.0 || !v.is_finite()) {
                return Err(Error::InvalidSchedule {
                    flag: "positivity",
                    detail: format!("{which} table has a non-positive entry"),
                });
            }
            // Nonincreasing from some n0 in the first tenth of the horizon.
            let n0 = n / 10;
            if head.windows(2).skip(n0).any(|w| w[1] > w[0] + 1e-15) {
                return Err(Error::InvalidSchedule {
                    flag: "monotonicity",
                    detail: format!("{which} table increases beyond entry {n0}"),
                });
            }
            // Least-squares slope of ln(step) against ln(n+1) over the tail.
            let start = n / 2;
            let pts: Vec<(f64, f64)> = (start..n)
                .map(|k| (((k + 1) as f64).ln(), head[k].ln()))
                .collect();
            let m = pts.len() as f64;
            let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / m;
            let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / m;
            let cov: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
            let var: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
            if var == 0.0 {
                return Err(Error::InvalidSchedule {
                    flag: "positivity",
                    detail: format!("{which} table horizon too short to estimate a tail"),
                });
            }
            Ok((-(cov / var), true))
        }
    }
}
