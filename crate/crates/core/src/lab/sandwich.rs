use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bounds::coverage_threshold;
use super::CoverageReport;
use crate::covariance::min_eigenvalue;
use crate::error::{config, Result};
use crate::model::{stream_rng, streams, trial_seed, BanditInstance, Context, ExperimentConfig};
use crate::planner::{plan_with_covariance, MixturePolicy};
use crate::sampler::{dataset_covariance, sample_stream};

/// PSD slack allowed on the smallest eigenvalue.
pub const PSD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichOptions {
    pub trials: usize,
    /// Contexts used to estimate per-phase second moments when the context
    /// distribution has no finite support.
    pub moment_samples: usize,
    pub seed: u64,
}

impl Default for SandwichOptions {
    fn default() -> Self {
        Self {
            trials: 200,
            moment_samples: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    /// Offline covariance at most twice the expected covariance.
    pub upper: CoverageReport,
    /// Nine times the online covariance at least the expected covariance.
    pub lower: CoverageReport,
    pub worst_upper_eigenvalue: f64,
    pub worst_lower_eigenvalue: f64,
    pub exact_moments: bool,
}

impl SandwichReport {
    pub fn pass(&self) -> bool {
        self.upper.pass && self.lower.pass
    }
}

fn outer(x: &[f64]) -> DMatrix<f64> {
    let v = DVector::from_column_slice(x);
    &v * v.transpose()
}

/// `λI + α Σ_k m_k E[φφᵀ]` where phase `k` lasts `m_k` planner steps and its
/// feature law is the phase's argmax rule pushed through the context law.
pub fn expected_covariance(policy: &MixturePolicy, weighted_contexts: &[(Context, f64)]) -> DMatrix<f64> {
    let d = policy.dim();
    let mut sigma = DMatrix::from_diagonal_element(d, d, policy.lambda_reg());
    for (k, len) in policy.phase_lengths().into_iter().enumerate() {
        let mut moment = DMatrix::zeros(d, d);
        for (c, w) in weighted_contexts {
            moment += *w * outer(c.feature(policy.phase_action(k, c)));
        }
        sigma += (policy.alpha() * len as f64) * moment;
    }
    sigma
}

/// Runs planner and sampler `trials` times and checks both sides of the
/// offline/online covariance sandwich, each against a `δ/4` budget.
pub fn sandwich_check(
    instance: &BanditInstance,
    config: &ExperimentConfig,
    options: &SandwichOptions,
) -> Result<SandwichReport> {
    config.validate()?;
    if options.trials == 0 {
        return Err(self::config("sandwich check needs at least one trial"));
    }
    let exact = instance.sampler().support();
    let exact_moments = exact.is_some();
    let moment_contexts = match exact {
        Some(s) => s,
        None => {
            if options.moment_samples == 0 {
                return Err(self::config("moment_samples must be positive without finite support"));
            }
            let mut rng = stream_rng(options.seed, streams::EVAL);
            let w = 1.0 / options.moment_samples as f64;
            instance
                .draw_contexts(options.moment_samples, &mut rng)
                .into_iter()
                .map(|c| (c, w))
                .collect()
        }
    };
    let (mut upper_violations, mut lower_violations) = (0, 0);
    let (mut worst_upper, mut worst_lower) = (f64::INFINITY, f64::INFINITY);
    for t in 0..options.trials {
        let s = trial_seed(options.seed, t as u64);
        let offline = instance.draw_contexts(config.m, &mut stream_rng(s, streams::OFFLINE));
        let (policy, _, sigma_m) = plan_with_covariance(&offline, config)?;
        let sigma_bar = expected_covariance(&policy, &moment_contexts);
        let online = instance.draw_contexts(config.n, &mut stream_rng(s, streams::ONLINE));
        let ds = sample_stream(
            &policy,
            instance,
            &online,
            &mut stream_rng(s, streams::POLICY),
            &mut stream_rng(s, streams::NOISE),
        )?;
        let sigma_n = dataset_covariance(&ds, config.lambda_reg)?;

        let up = min_eigenvalue(&(2.0 * &sigma_bar - sigma_m.matrix()));
        let low = min_eigenvalue(&(9.0 * sigma_n.matrix() - &sigma_bar));
        worst_upper = worst_upper.min(up);
        worst_lower = worst_lower.min(low);
        upper_violations += usize::from(up < -PSD_TOLERANCE);
        lower_violations += usize::from(low < -PSD_TOLERANCE);
    }
    let target = config.delta / 4.0;
    let threshold = coverage_threshold(target, options.trials);
    let report = |violations, what: &str| {
        CoverageReport::new(
            options.trials,
            violations,
            target,
            format!(
                "{what}, {} (M={}, N={}, lambda={})",
                instance.name, config.m, config.n, config.lambda_reg
            ),
            options.seed,
            threshold,
        )
    };
    Ok(SandwichReport {
        upper: report(upper_violations, "offline <= 2 expected"),
        lower: report(lower_violations, "9 online >= expected"),
        worst_upper_eigenvalue: worst_upper,
        worst_lower_eigenvalue: worst_lower,
        exact_moments,
    })
}

/// Regularization at which the online side holds with probability `1 - δ/4`.
pub fn online_lambda_threshold(d: usize, delta: f64) -> f64 {
    24.0 * (8.0 * d as f64 / delta).ln()
}

/// Whether `m` offline steps meet the offline-side requirement
/// `M ≥ (96KN/λ) ln(192dNK/(λδ))`, with `K` the switch-count bound rounded up.
pub fn offline_steps_sufficient(d: usize, m: usize, n: usize, lambda_reg: f64, delta: f64) -> bool {
    let k = crate::planner::switch_bound(d, m, lambda_reg).ceil().max(1.0);
    let n = n as f64;
    let need = 96.0 * k * n / lambda_reg * (192.0 * d as f64 * n * k / (lambda_reg * delta)).ln();
    m as f64 >= need
}
