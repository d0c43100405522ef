use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bounds::{bernstein_bound, coverage_threshold, reverse_bernstein_bound};
use super::CoverageReport;
use crate::error::{config, Result};
use crate::model::stream_rng;

/// Bernoulli processes whose success probability `p_t` is known given the
/// history, so conditional means are exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessFamily {
    Iid {
        p: f64,
    },
    Constant {
        value: bool,
    },
    /// `p_t = high` after a success, `low` after a failure.
    Sticky {
        low: f64,
        high: f64,
    },
    /// Pushes the running mean toward `target` from either side.
    Steering {
        target: f64,
    },
}

impl ProcessFamily {
    fn next_p(&self, t: usize, ones: usize, last: bool) -> f64 {
        match *self {
            ProcessFamily::Iid { p } => p,
            ProcessFamily::Constant { value } => f64::from(u8::from(value)),
            ProcessFamily::Sticky { low, high } => {
                if last {
                    high
                } else {
                    low
                }
            }
            ProcessFamily::Steering { target } => {
                let mean = if t == 0 { target } else { ones as f64 / t as f64 };
                if mean < target {
                    0.9
                } else {
                    0.05
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        let valid = match *self {
            ProcessFamily::Iid { p } => ok(p),
            ProcessFamily::Constant { .. } => true,
            ProcessFamily::Sticky { low, high } => ok(low) && ok(high),
            ProcessFamily::Steering { target } => ok(target),
        };
        if valid {
            Ok(())
        } else {
            Err(config("process probabilities must lie in [0, 1]"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarBound {
    /// Sum of conditional means bounded by the realized sum.
    ReverseBernstein,
    /// Sum of `X_t - p_t` bounded by the summed conditional variances.
    Bernstein,
}

/// Simulates `trials` sequences of length `horizon` and counts how often
/// `bound` fails.
pub fn coverage_test(
    family: ProcessFamily,
    bound: ScalarBound,
    horizon: usize,
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<CoverageReport> {
    family.validate()?;
    if trials == 0 || horizon == 0 {
        return Err(config("coverage needs at least one trial and one step"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(config("delta must lie in (0, 1)"));
    }
    let mut rng = stream_rng(seed, 0);
    let mut violations = 0;
    for _ in 0..trials {
        let (mut sum_x, mut sum_p, mut sum_var) = (0.0, 0.0, 0.0);
        let (mut ones, mut last) = (0, false);
        for t in 0..horizon {
            let p = family.next_p(t, ones, last);
            last = rng.random_bool(p);
            ones += usize::from(last);
            sum_x += f64::from(u8::from(last));
            sum_p += p;
            sum_var += p * (1.0 - p);
        }
        let violated = match bound {
            ScalarBound::ReverseBernstein => sum_p > reverse_bernstein_bound(sum_x, delta),
            ScalarBound::Bernstein => sum_x - sum_p > bernstein_bound(sum_var, delta),
        };
        violations += usize::from(violated);
    }
    let name = match bound {
        ScalarBound::ReverseBernstein => "reverse bernstein",
        ScalarBound::Bernstein => "bernstein",
    };
    Ok(CoverageReport::new(
        trials,
        violations,
        delta,
        format!("{name}, {family:?}, horizon {horizon}"),
        seed,
        coverage_threshold(delta, trials),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_process_never_violates() {
        for value in [false, true] {
            for bound in [ScalarBound::ReverseBernstein, ScalarBound::Bernstein] {
                let r = coverage_test(ProcessFamily::Constant { value }, bound, 100, 500, 0.05, 1).unwrap();
                assert_eq!(r.violations, 0);
                assert!(r.pass);
            }
        }
    }

    #[test]
    fn iid_coverage() {
        let r = coverage_test(
            ProcessFamily::Iid { p: 0.3 },
            ScalarBound::ReverseBernstein,
            100,
            10_000,
            0.05,
            2,
        )
        .unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn adapted_coverage() {
        for family in [
            ProcessFamily::Sticky { low: 0.1, high: 0.9 },
            ProcessFamily::Steering { target: 0.5 },
        ] {
            for bound in [ScalarBound::ReverseBernstein, ScalarBound::Bernstein] {
                let r = coverage_test(family, bound, 100, 5_000, 0.05, 3).unwrap();
                assert!(r.pass, "{r:?}");
            }
        }
    }

    #[test]
    fn rejects_bad_probabilities() {
        assert!(coverage_test(ProcessFamily::Iid { p: 1.5 }, ScalarBound::Bernstein, 10, 10, 0.05, 0).is_err());
    }
}
