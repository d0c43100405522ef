//! Domain types shared by every stage: contexts, instances, interaction
//! records and experiment configuration.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrixView;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Result};

/// Deterministic generator used for every simulated stream.
pub type SimRng = ChaCha8Rng;

/// Well-known stream ids derived from a trial's master seed.
pub mod streams {
    pub const ENVIRONMENT: u64 = 0;
    pub const OFFLINE: u64 = 1;
    pub const ONLINE: u64 = 2;
    pub const POLICY: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const EVAL: u64 = 5;
}

/// Splits a master seed into independent, reproducible streams.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Master seed of trial `trial` under an experiment seed, decorrelated by
/// a splitmix64 finalizer.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed ^ trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Index of the largest score, lowest index on ties. NaN scores never win.
pub(crate) fn argmax(scores: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in scores.into_iter().enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// Row-major `actions × d` matrix; row `a` is the feature of action `a`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ActionFeatures {
    n_actions: usize,
    dim: usize,
    data: Vec<f64>,
}

impl ActionFeatures {
    pub fn from_row_major(n_actions: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n_actions == 0 {
            return Err(contract("a context needs at least one action"));
        }
        if dim == 0 {
            return Err(contract("feature dimension must be positive"));
        }
        if data.len() != n_actions * dim {
            return Err(contract(format!(
                "expected {} entries for {n_actions}x{dim} features, got {}",
                n_actions * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(contract(format!("non-finite feature entry in action {}", pos / dim)));
        }
        Ok(Self { n_actions, dim, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(contract("ragged feature rows"));
        }
        Self::from_row_major(n, d, rows.into_iter().flatten().collect())
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, action: usize) -> &[f64] {
        &self.data[action * self.dim..(action + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `d × actions` view whose columns are the action features.
    pub fn columns(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.dim, self.n_actions)
    }

    pub fn max_row_norm(&self) -> f64 {
        self.rows().map(norm2).fold(0.0, f64::max)
    }
}

impl fmt::Debug for ActionFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for ActionFeatures {
    type Error = crate::Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<ActionFeatures> for Vec<Vec<f64>> {
    fn from(f: ActionFeatures) -> Self {
        f.rows().map(<[f64]>::to_vec).collect()
    }
}

/// An observed context: its id, the available action features and, for
/// tabular data, the per-action mean rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub id: u64,
    pub features: Arc<ActionFeatures>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<Arc<[f64]>>,
}

impl Context {
    pub fn new(id: u64, features: ActionFeatures) -> Self {
        Self {
            id,
            features: Arc::new(features),
            relevance: None,
        }
    }

    pub fn with_relevance(id: u64, features: ActionFeatures, relevance: Vec<f64>) -> Result<Self> {
        if relevance.len() != features.n_actions() {
            return Err(contract("one relevance value per action required"));
        }
        Ok(Self {
            id,
            features: Arc::new(features),
            relevance: Some(relevance.into()),
        })
    }

    pub fn n_actions(&self) -> usize {
        self.features.n_actions()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn feature(&self, action: usize) -> &[f64] {
        self.features.row(action)
    }
}

/// Source of i.i.d. contexts from the context distribution.
pub trait ContextSampler: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn draw(&self, rng: &mut dyn RngCore) -> Context;

    /// Exact support with probabilities, when the distribution is finite.
    fn support(&self) -> Option<Vec<(Context, f64)>> {
        None
    }
}

/// Finite context distribution, uniform unless weights are given.
#[derive(Debug, Clone)]
pub struct FiniteContexts {
    contexts: Vec<Context>,
    // cumulative probabilities, last entry 1
    cumulative: Option<Vec<f64>>,
}

impl FiniteContexts {
    pub fn uniform(contexts: Vec<Context>) -> Result<Self> {
        Self::check(&contexts)?;
        Ok(Self {
            contexts,
            cumulative: None,
        })
    }

    pub fn weighted(contexts: Vec<Context>, weights: &[f64]) -> Result<Self> {
        Self::check(&contexts)?;
        if weights.len() != contexts.len() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(config("one nonnegative weight per context required"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(config("weights must not all be zero"));
        }
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(Self {
            contexts,
            cumulative: Some(cumulative),
        })
    }

    fn check(contexts: &[Context]) -> Result<()> {
        let Some(first) = contexts.first() else {
            return Err(config("empty context pool"));
        };
        if contexts.iter().any(|c| c.dim() != first.dim()) {
            return Err(contract("contexts disagree on feature dimension"));
        }
        Ok(())
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    fn probability(&self, i: usize) -> f64 {
        match &self.cumulative {
            None => 1.0 / self.contexts.len() as f64,
            Some(c) => c[i] - if i == 0 { 0.0 } else { c[i - 1] },
        }
    }
}

impl ContextSampler for FiniteContexts {
    fn dim(&self) -> usize {
        self.contexts[0].dim()
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Context {
        let i = match &self.cumulative {
            None => rng.random_range(0..self.contexts.len()),
            Some(c) => {
                let u: f64 = rng.random();
                c.partition_point(|&p| p <= u).min(c.len() - 1)
            }
        };
        self.contexts[i].clone()
    }

    fn support(&self) -> Option<Vec<(Context, f64)>> {
        Some(
            self.contexts
                .iter()
                .enumerate()
                .map(|(i, c)| (c.clone(), self.probability(i)))
                .collect(),
        )
    }
}

/// Ground truth for simulation: parameter, context distribution and noise.
#[derive(Debug, Clone)]
pub struct BanditInstance {
    pub name: String,
    theta_star: Vec<f64>,
    noise_std: f64,
    contexts: Arc<dyn ContextSampler>,
}

impl BanditInstance {
    pub fn new(
        name: impl Into<String>,
        theta_star: Vec<f64>,
        noise_std: f64,
        contexts: Arc<dyn ContextSampler>,
    ) -> Result<Self> {
        if theta_star.is_empty() {
            return Err(config("dimension must be at least 1"));
        }
        if theta_star.iter().any(|v| !v.is_finite()) {
            return Err(config("theta_star must be finite"));
        }
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(config("noise_std must be a nonnegative real"));
        }
        if contexts.dim() != theta_star.len() {
            return Err(contract(format!(
                "context dimension {} does not match theta_star length {}",
                contexts.dim(),
                theta_star.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            theta_star,
            noise_std,
            contexts,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn sampler(&self) -> &Arc<dyn ContextSampler> {
        &self.contexts
    }

    pub fn draw_context(&self, rng: &mut dyn RngCore) -> Context {
        self.contexts.draw(rng)
    }

    pub fn draw_contexts(&self, n: usize, rng: &mut dyn RngCore) -> Vec<Context> {
        (0..n).map(|_| self.contexts.draw(rng)).collect()
    }

    /// Noise-free reward of `action` in `context`; tabular relevance wins
    /// over the linear model when present.
    pub fn mean_reward(&self, context: &Context, action: usize) -> f64 {
        match &context.relevance {
            Some(rel) => rel[action],
            None => dot(context.feature(action), &self.theta_star),
        }
    }

    pub fn best_mean_reward(&self, context: &Context) -> f64 {
        (0..context.n_actions())
            .map(|a| self.mean_reward(context, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn draw_reward(&self, context: &Context, action: usize, rng: &mut dyn RngCore) -> f64 {
        self.mean_reward(context, action) + self.noise(rng)
    }

    fn noise(&self, rng: &mut dyn RngCore) -> f64 {
        if self.noise_std == 0.0 {
            0.0
        } else {
            let z: f64 = StandardNormal.sample(rng);
            self.noise_std * z
        }
    }
}

/// Linear reward `φᵀθ* + η` with Gaussian noise of scale `noise_std`.
pub fn reward_draw(instance: &BanditInstance, feature: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
    if feature.len() != instance.dim() {
        return Err(contract(format!(
            "feature has length {}, instance dimension is {}",
            feature.len(),
            instance.dim()
        )));
    }
    Ok(dot(feature, &instance.theta_star) + instance.noise(rng))
}

/// One online interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub context_id: u64,
    pub action_index: usize,
    pub feature: Vec<f64>,
    pub reward: f64,
}

/// Ordered interaction log with a fixed feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionDataset {
    dim: usize,
    records: Vec<InteractionRecord>,
}

impl InteractionDataset {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            records: Vec::new(),
        }
    }

    pub fn from_records(dim: usize, records: Vec<InteractionRecord>) -> Result<Self> {
        let mut ds = Self::new(dim);
        for r in records {
            ds.push(r)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, record: InteractionRecord) -> Result<()> {
        if record.feature.len() != self.dim {
            return Err(contract(format!(
                "record feature has length {}, dataset dimension is {}",
                record.feature.len(),
                self.dim
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The first `n` records as a new dataset.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            dim: self.dim,
            records: self.records[..n.min(self.records.len())].to_vec(),
        }
    }
}

/// Sizes, regularization and confidence for one planner/sampler run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Offline contexts given to the planner.
    pub m: usize,
    /// Online samples collected by the sampler.
    pub n: usize,
    /// Discount on offline updates; `None` means `n / m`.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub lambda_reg: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_delta() -> f64 {
    0.05
}

fn default_epsilon() -> f64 {
    0.1
}

impl ExperimentConfig {
    pub fn new(m: usize, n: usize, lambda_reg: f64) -> Self {
        Self {
            m,
            n,
            alpha: None,
            lambda_reg,
            delta: default_delta(),
            epsilon: default_epsilon(),
            seed: 0,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or_else(|| {
            if self.m == 0 {
                1.0
            } else {
                self.n as f64 / self.m as f64
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(config("M (offline contexts) must be positive"));
        }
        if self.alpha.is_none() && self.n > self.m {
            return Err(config(format!(
                "default alpha = N/M requires N <= M (N = {}, M = {})",
                self.n, self.m
            )));
        }
        let alpha = self.alpha();
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(config(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if !(self.lambda_reg > 0.0) || !self.lambda_reg.is_finite() {
            return Err(config(format!("lambda_reg must be positive, got {}", self.lambda_reg)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.epsilon > 0.0) {
            return Err(config("epsilon must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed_instance(theta: Vec<f64>, noise: f64, rows: Vec<Vec<f64>>) -> BanditInstance {
        let ctx = Context::new(0, ActionFeatures::from_rows(rows).unwrap());
        let pool = FiniteContexts::uniform(vec![ctx]).unwrap();
        BanditInstance::new("fixed", theta, noise, Arc::new(pool)).unwrap()
    }

    #[test]
    fn noiseless_reward_is_linear() {
        let inst = fixed_instance(vec![1.0, 0.0], 0.0, vec![vec![1.0, 0.0]]);
        let mut rng = stream_rng(1, 0);
        assert_eq!(reward_draw(&inst, &[1.0, 0.0], &mut rng).unwrap(), 1.0);

        let inst = fixed_instance(vec![1.0, -1.0], 0.0, vec![vec![0.5, 0.5]]);
        assert_eq!(reward_draw(&inst, &[0.5, 0.5], &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn reward_dimension_mismatch_is_rejected() {
        let inst = fixed_instance(vec![1.0, 0.0], 0.0, vec![vec![1.0, 0.0]]);
        let mut rng = stream_rng(1, 0);
        assert!(matches!(
            reward_draw(&inst, &[1.0], &mut rng),
            Err(crate::Error::Contract(_))
        ));
    }

    #[test]
    fn noisy_reward_mean_converges() {
        let mut setup = stream_rng(7, 0);
        let theta: Vec<f64> = (0..4).map(|_| setup.random_range(-1.0..1.0)).collect();
        let phi = vec![0.3, -0.2, 0.5, 0.1];
        let inst = fixed_instance(theta.clone(), 1.0, vec![phi.clone()]);
        let mut rng = stream_rng(7, 1);
        let n = 100_000;
        let mean = (0..n).map(|_| reward_draw(&inst, &phi, &mut rng).unwrap()).sum::<f64>() / n as f64;
        // variance of the noise is 1
        assert!((mean - dot(&phi, &theta)).abs() <= 3e-2);
    }

    #[test]
    fn seeded_streams_replay() {
        let a: Vec<u64> = (0..5).map(|_| stream_rng(3, 2).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert_ne!(stream_rng(3, 2).next_u64(), stream_rng(3, 3).next_u64());
    }

    #[test]
    fn features_reject_bad_shapes() {
        assert!(ActionFeatures::from_rows(vec![]).is_err());
        assert!(ActionFeatures::from_rows(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(ActionFeatures::from_rows(vec![vec![f64::NAN]]).is_err());
        let f = ActionFeatures::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(f.columns()[(1, 0)], 2.0);
        assert_eq!(f.columns()[(0, 1)], 3.0);
    }

    #[test]
    fn weighted_support_probabilities() {
        let c = |id| Context::new(id, ActionFeatures::from_rows(vec![vec![1.0]]).unwrap());
        let pool = FiniteContexts::weighted(vec![c(0), c(1)], &[1.0, 3.0]).unwrap();
        let support = pool.support().unwrap();
        assert!((support[0].1 - 0.25).abs() < 1e-15);
        assert!((support[1].1 - 0.75).abs() < 1e-15);
        let mut rng = stream_rng(0, 0);
        let ones = (0..40_000).filter(|_| pool.draw(&mut rng).id == 1).count();
        assert!((ones as f64 / 40_000.0 - 0.75).abs() < 0.01);
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::new(100, 10, 1.0).validate().is_ok());
        assert!((ExperimentConfig::new(100, 10, 1.0).alpha() - 0.1).abs() < 1e-15);
        assert!(ExperimentConfig::new(10, 100, 1.0).validate().is_err());
        assert!(ExperimentConfig::new(10, 100, 1.0).with_alpha(1.0).validate().is_ok());
        assert!(ExperimentConfig::new(10, 10, 0.0).validate().is_err());
        assert!(ExperimentConfig::new(10, 10, 1.0).with_alpha(1.5).validate().is_err());
        let mut c = ExperimentConfig::new(10, 10, 1.0);
        c.delta = 1.0;
        assert!(c.validate().is_err());
    }
}
