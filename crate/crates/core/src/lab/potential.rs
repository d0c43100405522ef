use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::covariance::{InverseMetric, RegularizedCovariance, NORM_CAP_TOLERANCE};
use crate::error::{config, Result};
use crate::model::{norm2, Context, ExperimentConfig};
use crate::planner::{switch_bound, MixturePolicy, UncertaintyTrace};

const POTENTIAL_TOLERANCE: f64 = 1e-9;

/// Both sides of the squared-norm elliptical potential inequality under a
/// determinant-doubling refresh schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialOutcome {
    /// `Σ_m ‖x_m‖²` under the covariance frozen at the last doubling.
    pub lhs: f64,
    /// `3 ln(det Σ_{M+1} / det λI)`.
    pub rhs: f64,
    /// `Σ_m ‖x_m‖` (unsquared), reported for comparison.
    pub unsquared_lhs: f64,
    pub max_det_ratio: f64,
    pub pass: bool,
}

/// Replays `vectors` through `λI + Σ xxᵀ`, refreshing the frozen covariance
/// whenever the determinant has doubled.
pub fn potential_check(vectors: &[Vec<f64>], lambda_reg: f64) -> Result<PotentialOutcome> {
    if !(lambda_reg >= 1.0) {
        return Err(config(format!(
            "potential check needs lambda_reg >= 1, got {lambda_reg}"
        )));
    }
    let Some(first) = vectors.first() else {
        return Ok(PotentialOutcome {
            lhs: 0.0,
            rhs: 0.0,
            unsquared_lhs: 0.0,
            max_det_ratio: 1.0,
            pass: true,
        });
    };
    let d = first.len();
    if vectors
        .iter()
        .any(|v| v.len() != d || norm2(v) > 1.0 + NORM_CAP_TOLERANCE)
    {
        return Err(config("vectors must share one dimension and have norm at most 1"));
    }
    let mut cov = RegularizedCovariance::new(d, lambda_reg, 1.0)?;
    let mut frozen = cov.snapshot(1);
    let (mut lhs, mut unsquared, mut max_ratio) = (0.0, 0.0, 1.0f64);
    for (i, x) in vectors.iter().enumerate() {
        if cov.log_det() > frozen.log_det() + LN_2 {
            frozen = cov.snapshot(i + 1);
        }
        let ratio = cov.det_ratio(&frozen);
        if ratio > 4.0 {
            return Err(config(format!("determinant ratio {ratio} exceeds 4")));
        }
        max_ratio = max_ratio.max(ratio);
        let n = frozen.mahalanobis(x)?;
        lhs += n * n;
        unsquared += n;
        cov.rank_one_update(x)?;
    }
    cov.refresh();
    let rhs = 3.0 * (cov.log_det() - d as f64 * lambda_reg.ln());
    Ok(PotentialOutcome {
        lhs,
        rhs,
        unsquared_lhs: unsquared,
        max_det_ratio: max_ratio,
        pass: lhs <= rhs + POTENTIAL_TOLERANCE,
    })
}

/// The `√α`-scaled features a planner run folded into its covariance.
pub fn planner_vectors(contexts: &[Context], trace: &UncertaintyTrace, alpha: f64) -> Vec<Vec<f64>> {
    let s = alpha.sqrt();
    contexts
        .iter()
        .zip(&trace.actions)
        .map(|(c, &a)| c.feature(a).iter().map(|v| v * s).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchOutcome {
    /// Refreshes after the initial snapshot, i.e. policy updates.
    pub switches: usize,
    /// Distinct policies, one more than `switches`.
    pub snapshots: usize,
    pub bound: f64,
    /// `switches <= bound`, compared exactly.
    pub pass: bool,
}

/// Policy updates against `d·log₂(1 + M/(dλ))`. Each update at least
/// doubles the determinant, which caps the update count; the initial
/// snapshot is not an update, so the distinct-policy count can exceed the
/// bound by less than one.
pub fn switch_bound_check(policy: &MixturePolicy, config: &ExperimentConfig) -> SwitchOutcome {
    let bound = switch_bound(policy.dim(), config.m, config.lambda_reg);
    let snapshots = policy.n_phases();
    let switches = snapshots - 1;
    SwitchOutcome {
        switches,
        snapshots,
        bound,
        pass: switches as f64 <= bound,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotoneOutcome {
    pub probes: usize,
    /// Largest increase of a probe's max-uncertainty between consecutive snapshots.
    pub worst_increase: f64,
    pub pass: bool,
}

/// Checks that each probe's `max_a ‖φ‖` never grows from one snapshot to
/// the next, up to `tolerance`.
pub fn decreasing_uncertainty_check(policy: &MixturePolicy, probes: &[Context], tolerance: f64) -> MonotoneOutcome {
    let mut worst = f64::NEG_INFINITY;
    for c in probes {
        let u: Vec<f64> = policy
            .snapshots()
            .iter()
            .map(|s| s.max_uncertainty(&c.features).1)
            .collect();
        for w in u.windows(2) {
            worst = worst.max(w[1] - w[0]);
        }
    }
    MonotoneOutcome {
        probes: probes.len(),
        worst_increase: worst,
        pass: worst <= tolerance,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySumOutcome {
    pub sum: f64,
    /// `√(3 (M/α) ln(det Σ_{M+1} / det λI))`.
    pub log_det_bound: f64,
    /// `3 √((M/α) d ln((dλ + M)/d))`.
    pub closed_form_bound: f64,
    pub pass: bool,
}

/// Sum of the planner's observed uncertainties against both bounds.
pub fn uncertainty_sum_check(
    trace: &UncertaintyTrace,
    final_covariance: &RegularizedCovariance,
    config: &ExperimentConfig,
) -> UncertaintySumOutcome {
    let d = final_covariance.dim() as f64;
    let m = config.m as f64;
    let alpha = config.alpha();
    let lambda = config.lambda_reg;
    let info = final_covariance.log_det() - d * lambda.ln();
    let log_det_bound = (3.0 * m / alpha * info).sqrt();
    let closed_form_bound = 3.0 * (m / alpha * d * ((d * lambda + m) / d).ln()).sqrt();
    let sum = trace.lazy_sum();
    UncertaintySumOutcome {
        sum,
        log_det_bound,
        closed_form_bound,
        pass: sum <= log_det_bound * (1.0 + 1e-12) && sum <= closed_form_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::UnitBallContexts;
    use crate::model::{stream_rng, ContextSampler};
    use crate::planner::plan_with_covariance;
    use proptest::prelude::*;

    #[test]
    fn single_vector() {
        let r = potential_check(&[vec![1.0, 0.0]], 1.0).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-15);
        assert!((r.rhs - 3.0 * 2f64.ln()).abs() < 1e-12);
        assert!(r.pass);
    }

    #[test]
    fn zero_vectors() {
        let r = potential_check(&vec![vec![0.0; 3]; 10], 2.0).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.rhs.abs() < 1e-12);
        assert!(r.pass);
    }

    #[test]
    fn preconditions() {
        assert!(potential_check(&[vec![1.0]], 0.5).is_err());
        assert!(potential_check(&[vec![1.5]], 1.0).is_err());
    }

    #[test]
    fn random_unit_vectors_pass() {
        for seed in 0..10 {
            let mut rng = stream_rng(seed, 0);
            let v: Vec<Vec<f64>> = (0..2000)
                .map(|_| crate::environments::unit_ball_point(8, &mut rng))
                .map(|x| {
                    let n = norm2(&x);
                    x.iter().map(|v| v / n).collect()
                })
                .collect();
            let r = potential_check(&v, 1.0).unwrap();
            assert!(r.pass, "seed {seed}: {r:?}");
            assert!(r.max_det_ratio <= 2.0 + 1e-9);
        }
    }

    #[test]
    fn planner_run_satisfies_all_checks() {
        let sampler = UnitBallContexts::new(4, 6).unwrap();
        let mut rng = stream_rng(5, 0);
        let contexts: Vec<Context> = (0..300).map(|_| sampler.draw(&mut rng)).collect();
        let cfg = ExperimentConfig::new(300, 150, 1.0);
        let (policy, trace, cov) = plan_with_covariance(&contexts, &cfg).unwrap();
        assert!(switch_bound_check(&policy, &cfg).pass);
        let probes: Vec<Context> = (0..50).map(|_| sampler.draw(&mut rng)).collect();
        assert!(decreasing_uncertainty_check(&policy, &probes, 1e-8).pass);
        let v = planner_vectors(&contexts, &trace, cfg.alpha());
        assert!(potential_check(&v, cfg.lambda_reg).unwrap().pass);
        let sum = uncertainty_sum_check(&trace, &cov, &cfg);
        assert!(sum.pass, "{sum:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn potential_holds_for_capped_sequences(
            raw in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..200),
            lambda in 1.0f64..5.0,
        ) {
            let v: Vec<Vec<f64>> = raw.into_iter().map(|x| {
                let n = norm2(&x).max(1.0);
                x.iter().map(|c| c / n).collect()
            }).collect();
            let r = potential_check(&v, lambda).unwrap();
            prop_assert!(r.pass);
        }
    }
}
