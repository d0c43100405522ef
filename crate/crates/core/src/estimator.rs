//! Ridge extraction of `θ̂`, the greedy policy, its confidence radius and
//! Monte-Carlo evaluation against ground truth.

use serde::{Deserialize, Serialize};

use crate::covariance::{InverseMetric, RegularizedCovariance};
use crate::error::{config, contract, Error, Result};
use crate::model::{argmax, dot, BanditInstance, Context, InteractionDataset};

/// Ridge solution `θ̂ = (Σ'_N)⁻¹ Σ φ r` with its covariance.
#[derive(Debug, Clone)]
pub struct RidgeEstimate {
    pub theta_hat: Vec<f64>,
    pub covariance: RegularizedCovariance,
    pub n_samples: usize,
}

impl RidgeEstimate {
    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn predict(&self, feature: &[f64]) -> f64 {
        dot(feature, &self.theta_hat)
    }

    pub fn to_artifact(&self) -> EstimateArtifact {
        let d = self.dim();
        EstimateArtifact {
            d,
            lambda_reg: self.covariance.lambda_reg(),
            n_samples: self.n_samples,
            theta_hat: self.theta_hat.clone(),
            covariance: self.covariance.matrix().transpose().as_slice().to_vec(),
        }
    }

    pub fn from_artifact(a: EstimateArtifact) -> Result<Self> {
        if a.theta_hat.len() != a.d || a.covariance.len() != a.d * a.d {
            return Err(Error::Data("estimate artifact has inconsistent sizes".into()));
        }
        let m = nalgebra::DMatrix::from_row_slice(a.d, a.d, &a.covariance);
        Ok(Self {
            theta_hat: a.theta_hat,
            covariance: RegularizedCovariance::from_matrix(a.lambda_reg, 1.0, m, a.n_samples)?,
            n_samples: a.n_samples,
        })
    }
}

/// JSON form of a [`RidgeEstimate`]; the covariance is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateArtifact {
    pub d: usize,
    pub lambda_reg: f64,
    pub n_samples: usize,
    pub theta_hat: Vec<f64>,
    pub covariance: Vec<f64>,
}

/// Running sufficient statistics `(Σ', Σ φ r)` for repeated refits on a
/// growing dataset.
#[derive(Debug, Clone)]
pub struct RidgeAccumulator {
    covariance: RegularizedCovariance,
    moment: Vec<f64>,
    n: usize,
}

impl RidgeAccumulator {
    pub fn new(d: usize, lambda_reg: f64) -> Result<Self> {
        Ok(Self {
            covariance: RegularizedCovariance::new(d, lambda_reg, 1.0)?,
            moment: vec![0.0; d],
            n: 0,
        })
    }

    pub fn push(&mut self, feature: &[f64], reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::Data(format!("non-finite reward {reward}")));
        }
        self.covariance.rank_one_update(feature)?;
        for (m, f) in self.moment.iter_mut().zip(feature) {
            *m += f * reward;
        }
        self.n += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn estimate(&self) -> Result<RidgeEstimate> {
        let mut covariance = self.covariance.clone();
        covariance.refresh();
        let theta_hat = covariance.solve(&self.moment)?.as_slice().to_vec();
        Ok(RidgeEstimate {
            theta_hat,
            covariance,
            n_samples: self.n,
        })
    }
}

/// Solves `(ΦᵀΦ + λI) θ = Φᵀr`; an empty dataset gives `θ̂ = 0`.
pub fn ridge_fit(dataset: &InteractionDataset, lambda_reg: f64) -> Result<RidgeEstimate> {
    let mut acc = RidgeAccumulator::new(dataset.dim(), lambda_reg)?;
    for r in dataset.records() {
        acc.push(&r.feature, r.reward)?;
    }
    acc.estimate()
}

/// `argmax_a φ(s,a)ᵀθ̂`, lowest index on ties.
pub fn greedy_action(estimate: &RidgeEstimate, context: &Context) -> Result<usize> {
    if context.dim() != estimate.dim() {
        return Err(contract(format!(
            "context dimension {} does not match estimate dimension {}",
            context.dim(),
            estimate.dim()
        )));
    }
    Ok(argmax(context.features.rows().map(|row| estimate.predict(row))))
}

/// Which branch of the confidence radius is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusBranch {
    SmallSpace,
    LargeSpace,
}

/// `√β = min(α₁, α₂) + √λ·‖θ*‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRadius {
    pub beta_sqrt: f64,
    pub branch: RadiusBranch,
    pub theta_norm_bound: f64,
    /// Small-space term, when the state-action count is known.
    pub small_space: Option<f64>,
    pub large_space: f64,
}

/// Least-squares confidence radius.
///
/// `small_space = √(2 ln(2|S×A|) + ln(1/δ))`,
/// `large_space = 2 √(2d ln 6 + ln(1/δ))`. Without a state-action count only
/// the large-space branch applies.
pub fn beta_radius(
    d: usize,
    state_action_count: Option<u64>,
    delta: f64,
    lambda_reg: f64,
    theta_norm_bound: f64,
) -> Result<ConfidenceRadius> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(config(format!("delta must lie in (0, 1], got {delta}")));
    }
    if !(lambda_reg >= 0.0) || !(theta_norm_bound >= 0.0) {
        return Err(config("lambda_reg and theta_norm_bound must be nonnegative"));
    }
    if d == 0 || state_action_count == Some(0) {
        return Err(config("dimension and state-action count must be positive"));
    }
    let log_inv_delta = (1.0 / delta).ln();
    let large_space = 2.0 * (2.0 * d as f64 * 6f64.ln() + log_inv_delta).sqrt();
    let small_space = state_action_count.map(|n| (2.0 * (2.0 * n as f64).ln() + log_inv_delta).sqrt());
    let (base, branch) = match small_space {
        Some(s) if s < large_space => (s, RadiusBranch::SmallSpace),
        _ => (large_space, RadiusBranch::LargeSpace),
    };
    Ok(ConfidenceRadius {
        beta_sqrt: base + lambda_reg.sqrt() * theta_norm_bound,
        branch,
        theta_norm_bound,
        small_space,
        large_space,
    })
}

/// Running mean and standard error.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanAccumulator {
    n: usize,
    mean: f64,
    m2: f64,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std_err(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }
}

impl FromIterator<f64> for MeanAccumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::default();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// Held-out evaluation of a fitted estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Mean of `max_a ‖φ(s,a)‖_{Σ'⁻¹}` over the evaluation contexts.
    pub expected_max_uncertainty: f64,
    pub expected_max_uncertainty_se: f64,
    /// Mean gap between the best action and the greedy action.
    pub expected_suboptimality: f64,
    pub expected_suboptimality_se: f64,
    /// Mean reward of the greedy action.
    pub policy_value: f64,
    pub policy_value_se: f64,
    /// Mean of `max_a |φᵀθ̂ − r̄(s,a)|`.
    pub expected_max_prediction_error: f64,
    pub n_eval_contexts: usize,
}

/// Scores the greedy policy of `estimate` on `eval_contexts`.
pub fn evaluate(
    estimate: &RidgeEstimate,
    instance: &BanditInstance,
    eval_contexts: &[Context],
) -> Result<EvaluationReport> {
    evaluate_with(estimate, instance, eval_contexts, true)
}

/// `evaluate` without the uncertainty term, which dominates the cost.
pub fn evaluate_value(
    estimate: &RidgeEstimate,
    instance: &BanditInstance,
    eval_contexts: &[Context],
) -> Result<EvaluationReport> {
    evaluate_with(estimate, instance, eval_contexts, false)
}

fn evaluate_with(
    estimate: &RidgeEstimate,
    instance: &BanditInstance,
    eval_contexts: &[Context],
    with_uncertainty: bool,
) -> Result<EvaluationReport> {
    if eval_contexts.is_empty() {
        return Err(config("evaluation needs at least one context"));
    }
    if estimate.dim() != instance.dim() {
        return Err(contract("estimate and instance dimensions differ"));
    }
    let mut uncertainty = MeanAccumulator::default();
    let mut gap = MeanAccumulator::default();
    let mut value = MeanAccumulator::default();
    let mut pred_err = MeanAccumulator::default();
    for ctx in eval_contexts {
        let chosen = greedy_action(estimate, ctx)?;
        let chosen_value = instance.mean_reward(ctx, chosen);
        gap.push(instance.best_mean_reward(ctx) - chosen_value);
        value.push(chosen_value);
        pred_err.push(
            (0..ctx.n_actions())
                .map(|a| (estimate.predict(ctx.feature(a)) - instance.mean_reward(ctx, a)).abs())
                .fold(0.0, f64::max),
        );
        if with_uncertainty {
            uncertainty.push(estimate.covariance.max_uncertainty(&ctx.features).1);
        }
    }
    let (u, u_se) = if with_uncertainty {
        (uncertainty.mean(), uncertainty.std_err())
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(EvaluationReport {
        expected_max_uncertainty: u,
        expected_max_uncertainty_se: u_se,
        expected_suboptimality: gap.mean(),
        expected_suboptimality_se: gap.std_err(),
        policy_value: value.mean(),
        policy_value_se: value.std_err(),
        expected_max_prediction_error: pred_err.mean(),
        n_eval_contexts: eval_contexts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{stream_rng, ActionFeatures, FiniteContexts, InteractionRecord};
    use rand::Rng;
    use std::sync::Arc;

    fn record(feature: Vec<f64>, reward: f64) -> InteractionRecord {
        InteractionRecord {
            context_id: 0,
            action_index: 0,
            feature,
            reward,
        }
    }

    fn unit_ball(d: usize, rng: &mut impl Rng) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = crate::model::norm2(&v);
        v.iter().map(|x| x / n.max(1.0)).collect()
    }

    // Normal equations solved by Gauss-Jordan elimination.
    fn normal_equation_oracle(ds: &InteractionDataset, lambda: f64) -> Vec<f64> {
        let d = ds.dim();
        let mut a = vec![vec![0.0; d + 1]; d];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = lambda;
        }
        for r in ds.records() {
            for i in 0..d {
                for j in 0..d {
                    a[i][j] += r.feature[i] * r.feature[j];
                }
                a[i][d] += r.feature[i] * r.reward;
            }
        }
        for c in 0..d {
            let p = (c..d).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            let pivot = a[c][c];
            for v in a[c].iter_mut() {
                *v /= pivot;
            }
            for r in 0..d {
                if r != c {
                    let f = a[r][c];
                    for k in 0..=d {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        a.iter().map(|row| row[d]).collect()
    }

    fn instance_with(theta: Vec<f64>, contexts: Vec<Context>) -> BanditInstance {
        BanditInstance::new("t", theta, 0.0, Arc::new(FiniteContexts::uniform(contexts).unwrap())).unwrap()
    }

    #[test]
    fn empty_dataset_gives_zero() {
        let est = ridge_fit(&InteractionDataset::new(3), 1.0).unwrap();
        assert_eq!(est.theta_hat, vec![0.0; 3]);
        assert_eq!(est.n_samples, 0);
    }

    #[test]
    fn single_record() {
        let ds = InteractionDataset::from_records(3, vec![record(vec![1.0, 0.0, 0.0], 1.0)]).unwrap();
        let est = ridge_fit(&ds, 1.0).unwrap();
        assert!((est.theta_hat[0] - 0.5).abs() < 1e-15);
        assert_eq!(&est.theta_hat[1..], &[0.0, 0.0]);
    }

    #[test]
    fn non_finite_reward_is_a_data_error() {
        let ds = InteractionDataset::from_records(1, vec![record(vec![1.0], f64::NAN)]).unwrap();
        assert!(matches!(ridge_fit(&ds, 1.0), Err(Error::Data(_))));
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = stream_rng(12, 0);
        let d = 10;
        let records = (0..500)
            .map(|_| record(unit_ball(d, &mut rng), rng.random_range(-2.0..2.0)))
            .collect();
        let ds = InteractionDataset::from_records(d, records).unwrap();
        let est = ridge_fit(&ds, 0.3).unwrap();
        let oracle = normal_equation_oracle(&ds, 0.3);
        let err: f64 = est.theta_hat.iter().zip(&oracle).map(|(a, b)| (a - b).powi(2)).sum();
        let scale: f64 = oracle.iter().map(|b| b * b).sum();
        assert!(err.sqrt() <= 1e-8 * scale.sqrt());
    }

    #[test]
    fn greedy_action_cases() {
        let c = Context::new(
            0,
            ActionFeatures::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
        );
        let mut est = ridge_fit(&InteractionDataset::new(2), 1.0).unwrap();
        assert_eq!(greedy_action(&est, &c).unwrap(), 0);
        est.theta_hat = vec![1.0, 0.0];
        assert_eq!(greedy_action(&est, &c).unwrap(), 0);
        est.theta_hat = vec![0.0, 1.0];
        assert_eq!(greedy_action(&est, &c).unwrap(), 1);
    }

    #[test]
    fn greedy_action_matches_scan() {
        let mut rng = stream_rng(3, 0);
        let mut est = ridge_fit(&InteractionDataset::new(6), 1.0).unwrap();
        for _ in 0..50 {
            est.theta_hat = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let rows: Vec<Vec<f64>> = (0..20).map(|_| unit_ball(6, &mut rng)).collect();
            let mut best = 0;
            for (i, r) in rows.iter().enumerate() {
                if dot(r, &est.theta_hat) > dot(&rows[best], &est.theta_hat) {
                    best = i;
                }
            }
            let c = Context::new(0, ActionFeatures::from_rows(rows).unwrap());
            assert_eq!(greedy_action(&est, &c).unwrap(), best);
        }
    }

    #[test]
    fn greedy_action_is_invariant_to_reward_scaling() {
        let mut rng = stream_rng(30, 0);
        let d = 4;
        let records: Vec<_> = (0..60)
            .map(|_| record(unit_ball(d, &mut rng), rng.random_range(-1.0..1.0)))
            .collect();
        let ds = InteractionDataset::from_records(d, records.clone()).unwrap();
        let scaled = InteractionDataset::from_records(
            d,
            records
                .into_iter()
                .map(|mut r| {
                    r.reward *= 3.5;
                    r
                })
                .collect(),
        )
        .unwrap();
        let a = ridge_fit(&ds, 1.0).unwrap();
        let b = ridge_fit(&scaled, 1.0).unwrap();
        for _ in 0..30 {
            let rows: Vec<Vec<f64>> = (0..8).map(|_| unit_ball(d, &mut rng)).collect();
            let c = Context::new(0, ActionFeatures::from_rows(rows).unwrap());
            assert_eq!(greedy_action(&a, &c).unwrap(), greedy_action(&b, &c).unwrap());
        }
    }

    #[test]
    fn beta_radius_values() {
        let r = beta_radius(1, None, 1.0, 0.0, 1.0).unwrap();
        let expect = 2.0 * (2.0 * 6f64.ln()).sqrt();
        assert!((r.beta_sqrt - expect).abs() < 1e-12);
        assert!((r.beta_sqrt - 3.786).abs() < 1e-3);
        assert_eq!(r.branch, RadiusBranch::LargeSpace);

        let r = beta_radius(1, Some(1), 1.0, 0.0, 1.0).unwrap();
        assert!((r.beta_sqrt - (2.0 * 2f64.ln()).sqrt()).abs() < 1e-12);
        assert!((r.beta_sqrt - 1.177).abs() < 1e-3);
        assert_eq!(r.branch, RadiusBranch::SmallSpace);

        let base = beta_radius(5, Some(40), 0.1, 0.0, 1.0).unwrap();
        let reg = beta_radius(5, Some(40), 0.1, 4.0, 1.0).unwrap();
        assert!((reg.beta_sqrt - base.beta_sqrt - 2.0).abs() < 1e-12);

        assert!(beta_radius(5, None, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn evaluation_cases() {
        let c = Context::new(
            0,
            ActionFeatures::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
        );
        let inst = instance_with(vec![1.0, 0.0], vec![c.clone()]);
        let mut est = ridge_fit(&InteractionDataset::new(2), 1.0).unwrap();
        est.theta_hat = vec![1.0, 0.0];
        let rep = evaluate(&est, &inst, std::slice::from_ref(&c)).unwrap();
        assert_eq!(rep.expected_suboptimality, 0.0);
        assert_eq!(rep.policy_value, 1.0);
        est.theta_hat = vec![0.0, 1.0];
        let rep = evaluate(&est, &inst, std::slice::from_ref(&c)).unwrap();
        assert_eq!(rep.expected_suboptimality, 1.0);
        assert_eq!(rep.expected_max_uncertainty, 1.0);
        assert!(evaluate(&est, &inst, &[]).is_err());
    }

    #[test]
    fn evaluation_matches_enumeration() {
        let mut rng = stream_rng(44, 0);
        let d = 5;
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let contexts: Vec<Context> = (0..40)
            .map(|i| {
                let rows = (0..7).map(|_| unit_ball(d, &mut rng)).collect();
                Context::new(i, ActionFeatures::from_rows(rows).unwrap())
            })
            .collect();
        let inst = instance_with(theta.clone(), contexts.clone());
        let records = (0..100)
            .map(|_| {
                let f = unit_ball(d, &mut rng);
                let r = dot(&f, &theta) + rng.random_range(-0.5..0.5);
                record(f, r)
            })
            .collect();
        let est = ridge_fit(&InteractionDataset::from_records(d, records).unwrap(), 1.0).unwrap();
        let rep = evaluate(&est, &inst, &contexts).unwrap();

        let mut total_gap = 0.0;
        for c in &contexts {
            let values: Vec<f64> = c.features.rows().map(|r| dot(r, &theta)).collect();
            let preds: Vec<f64> = c.features.rows().map(|r| dot(r, &est.theta_hat)).collect();
            let mut pick = 0;
            for a in 0..preds.len() {
                if preds[a] > preds[pick] {
                    pick = a;
                }
            }
            let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            total_gap += best - values[pick];
        }
        let oracle = total_gap / contexts.len() as f64;
        assert!((rep.expected_suboptimality - oracle).abs() <= 1e-12);
        // suboptimality is bounded by twice the worst prediction error
        assert!(rep.expected_suboptimality <= 2.0 * rep.expected_max_prediction_error + 1e-12);
        assert!(rep.expected_suboptimality >= -1e-8);
    }

    #[test]
    fn prediction_error_obeys_cauchy_schwarz() {
        let mut rng = stream_rng(45, 0);
        let d = 4;
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let records = (0..80)
            .map(|_| {
                let f = unit_ball(d, &mut rng);
                let r = dot(&f, &theta) + rng.random_range(-1.0..1.0);
                record(f, r)
            })
            .collect();
        let est = ridge_fit(&InteractionDataset::from_records(d, records).unwrap(), 1.0).unwrap();
        let diff: Vec<f64> = theta.iter().zip(&est.theta_hat).map(|(a, b)| a - b).collect();
        let sigma = est.covariance.matrix();
        let dv = nalgebra::DVector::from_column_slice(&diff);
        let diff_norm = (dv.transpose() * sigma * &dv)[(0, 0)].sqrt();
        for _ in 0..200 {
            let f = unit_ball(d, &mut rng);
            let err = dot(&f, &diff).abs();
            let bound = est.covariance.mahalanobis(&f).unwrap() * diff_norm;
            assert!(err <= bound * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn artifact_round_trip() {
        let ds = InteractionDataset::from_records(2, vec![record(vec![0.6, 0.8], 1.5)]).unwrap();
        let est = ridge_fit(&ds, 0.5).unwrap();
        let back = RidgeEstimate::from_artifact(est.to_artifact()).unwrap();
        assert_eq!(back.theta_hat, est.theta_hat);
        assert_eq!(back.covariance.matrix(), est.covariance.matrix());
    }
}
