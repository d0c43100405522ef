//! Reward-free planner over offline contexts.
//!
//! Each step picks the action of largest uncertainty under the covariance
//! frozen at the last determinant doubling, then folds the chosen feature
//! into the covariance with weight `α`. The frozen covariances, together
//! with the step at which each was taken, describe the mixture policy that
//! the sampler later replays.

use std::borrow::Borrow;
use std::f64::consts::LN_2;
use std::io::{Read, Write};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceSnapshot, InverseMetric, RegularizedCovariance};
use crate::error::{config, contract, Error, Result};
use crate::model::{Context, ExperimentConfig};
use crate::policy::ExplorationPolicy;

/// Per-step uncertainty recorded while planning.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyTrace {
    /// `max_a ‖φ(s_m,a)‖` under the frozen covariance used to act.
    pub lazy: Vec<f64>,
    /// The same maximum under the up-to-date covariance `Σ_m`.
    pub current: Vec<f64>,
    pub actions: Vec<usize>,
}

impl UncertaintyTrace {
    pub fn lazy_sum(&self) -> f64 {
        self.lazy.iter().sum()
    }

    pub fn current_sum(&self) -> f64 {
        self.current.iter().sum()
    }
}

/// Uniform mixture over the planner's per-step policies, stored as the
/// distinct frozen covariances and the step at which each phase began.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePolicy {
    lambda_reg: f64,
    alpha: f64,
    total_steps: usize,
    /// 1-based planner steps at which each phase starts.
    phase_starts: Vec<usize>,
    snapshots: Vec<CovarianceSnapshot>,
}

impl MixturePolicy {
    pub fn new(
        lambda_reg: f64,
        alpha: f64,
        total_steps: usize,
        phase_starts: Vec<usize>,
        snapshots: Vec<CovarianceSnapshot>,
    ) -> Result<Self> {
        if snapshots.is_empty() || snapshots.len() != phase_starts.len() {
            return Err(contract("one snapshot per phase required"));
        }
        if phase_starts[0] != 1 || phase_starts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(contract("phase starts must begin at 1 and strictly increase"));
        }
        if *phase_starts.last().unwrap() > total_steps {
            return Err(contract("phase start beyond the planner horizon"));
        }
        let d = snapshots[0].dim();
        if snapshots.iter().any(|s| s.dim() != d) {
            return Err(contract("snapshots disagree on dimension"));
        }
        Ok(Self {
            lambda_reg,
            alpha,
            total_steps,
            phase_starts,
            snapshots,
        })
    }

    pub fn dim(&self) -> usize {
        self.snapshots[0].dim()
    }

    pub fn lambda_reg(&self) -> f64 {
        self.lambda_reg
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Planner horizon `M`.
    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    /// Number of distinct policies `K`.
    pub fn n_phases(&self) -> usize {
        self.snapshots.len()
    }

    pub fn phase_starts(&self) -> &[usize] {
        &self.phase_starts
    }

    pub fn snapshots(&self) -> &[CovarianceSnapshot] {
        &self.snapshots
    }

    pub fn phase_lengths(&self) -> Vec<usize> {
        self.phase_starts
            .iter()
            .enumerate()
            .map(|(k, &start)| {
                let end = self.phase_starts.get(k + 1).copied().unwrap_or(self.total_steps + 1);
                end - start
            })
            .collect()
    }

    /// Phase containing the 1-based step `m`.
    pub fn phase_of(&self, m: usize) -> usize {
        self.phase_starts.partition_point(|&s| s <= m) - 1
    }

    /// Action chosen by phase `k`'s policy.
    pub fn phase_action(&self, k: usize, context: &Context) -> usize {
        self.snapshots[k].max_uncertainty(&context.features).0
    }

    /// Samples `m` uniformly from `[1, M]` and plays `π_m`.
    pub fn policy_action(&self, context: &Context, rng: &mut dyn RngCore) -> Result<usize> {
        if context.dim() != self.dim() {
            return Err(contract(format!(
                "context dimension {} does not match policy dimension {}",
                context.dim(),
                self.dim()
            )));
        }
        let m = rng.random_range(1..=self.total_steps);
        Ok(self.phase_action(self.phase_of(m), context))
    }
}

impl ExplorationPolicy for MixturePolicy {
    fn name(&self) -> &str {
        "planner_sampler"
    }

    fn dim(&self) -> Option<usize> {
        Some(MixturePolicy::dim(self))
    }

    fn choose(&self, context: &Context, rng: &mut dyn RngCore) -> usize {
        self.policy_action(context, rng)
            .expect("context dimension matches the policy")
    }
}

/// Incremental planner; `plan` drives it over a whole context set.
#[derive(Debug)]
pub struct Planner {
    cov: RegularizedCovariance,
    step: usize,
    phase_starts: Vec<usize>,
    snapshots: Vec<CovarianceSnapshot>,
    trace: UncertaintyTrace,
}

impl Planner {
    pub fn new(d: usize, lambda_reg: f64, alpha: f64) -> Result<Self> {
        Ok(Self {
            cov: RegularizedCovariance::new(d, lambda_reg, alpha)?,
            step: 0,
            phase_starts: Vec::new(),
            snapshots: Vec::new(),
            trace: UncertaintyTrace::default(),
        })
    }

    /// Processes one offline context and returns the chosen action.
    pub fn step(&mut self, context: &Context) -> Result<usize> {
        if context.dim() != self.cov.dim() {
            return Err(contract(format!(
                "context dimension {} does not match planner dimension {}",
                context.dim(),
                self.cov.dim()
            )));
        }
        self.step += 1;
        let doubled = self
            .snapshots
            .last()
            .is_none_or(|s| self.cov.log_det() > s.log_det() + LN_2);
        if doubled {
            self.phase_starts.push(self.step);
            let snap = self.cov.snapshot(self.step);
            self.snapshots.push(snap);
        }
        let frozen = self.snapshots.last().unwrap();
        let (action, lazy) = frozen.max_uncertainty(&context.features);
        let (_, current) = self.cov.max_uncertainty(&context.features);
        self.cov.rank_one_update(context.feature(action))?;
        self.trace.lazy.push(lazy);
        self.trace.current.push(current);
        self.trace.actions.push(action);
        Ok(action)
    }

    /// Covariance after all processed steps, `Σ_{m+1}`.
    pub fn covariance(&self) -> &RegularizedCovariance {
        &self.cov
    }

    pub fn finish(self) -> Result<(MixturePolicy, UncertaintyTrace)> {
        if self.step == 0 {
            return Err(config("planner received no contexts"));
        }
        let policy = MixturePolicy::new(
            self.cov.lambda_reg(),
            self.cov.alpha(),
            self.step,
            self.phase_starts,
            self.snapshots,
        )?;
        Ok((policy, self.trace))
    }
}

/// Runs the planner over exactly `config.m` offline contexts.
///
/// Also returns the final covariance `Σ_{M+1}`. No reward is ever read.
pub fn plan_with_covariance<I>(
    contexts: I,
    config: &ExperimentConfig,
) -> Result<(MixturePolicy, UncertaintyTrace, RegularizedCovariance)>
where
    I: IntoIterator,
    I::Item: Borrow<Context>,
{
    config.validate()?;
    let mut contexts = contexts.into_iter().peekable();
    let d = match contexts.peek() {
        Some(c) => c.borrow().dim(),
        None => return Err(self::config("planner received no contexts")),
    };
    let mut planner = Planner::new(d, config.lambda_reg, config.alpha())?;
    for c in contexts {
        planner.step(c.borrow())?;
    }
    if planner.step != config.m {
        return Err(self::config(format!(
            "expected M = {} offline contexts, got {}",
            config.m, planner.step
        )));
    }
    let cov = planner.cov.clone();
    let (policy, trace) = planner.finish()?;
    Ok((policy, trace, cov))
}

pub fn plan<I>(contexts: I, config: &ExperimentConfig) -> Result<(MixturePolicy, UncertaintyTrace)>
where
    I: IntoIterator,
    I::Item: Borrow<Context>,
{
    plan_with_covariance(contexts, config).map(|(p, t, _)| (p, t))
}

/// Upper bound `d·log₂(1 + M/(d·λ))` on the number of distinct policies.
pub fn switch_bound(d: usize, m: usize, lambda_reg: f64) -> f64 {
    let d = d as f64;
    d * (1.0 + m as f64 / (d * lambda_reg)).log2()
}

const ARTIFACT_FORMAT: &str = "linexplore-policy";
const ARTIFACT_VERSION: u32 = 1;
const BINARY_MAGIC: &[u8; 8] = b"LXPOLICY";

/// Serialized mixture policy; matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyArtifact {
    pub format: String,
    pub version: u32,
    pub d: usize,
    pub lambda_reg: f64,
    pub alpha: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub phase_starts: Vec<usize>,
    pub snapshots: Vec<Vec<f64>>,
}

impl From<&MixturePolicy> for PolicyArtifact {
    fn from(p: &MixturePolicy) -> Self {
        Self {
            format: ARTIFACT_FORMAT.to_owned(),
            version: ARTIFACT_VERSION,
            d: p.dim(),
            lambda_reg: p.lambda_reg,
            alpha: p.alpha,
            m: p.total_steps,
            phase_starts: p.phase_starts.clone(),
            // transpose of a symmetric matrix is itself, but keep the
            // row-major contract explicit
            snapshots: p
                .snapshots
                .iter()
                .map(|s| s.matrix().transpose().as_slice().to_vec())
                .collect(),
        }
    }
}

impl TryFrom<PolicyArtifact> for MixturePolicy {
    type Error = Error;

    fn try_from(a: PolicyArtifact) -> Result<Self> {
        if a.format != ARTIFACT_FORMAT {
            return Err(Error::Data(format!("not a policy artifact: {}", a.format)));
        }
        if a.version != ARTIFACT_VERSION {
            return Err(Error::Data(format!("unsupported policy version {}", a.version)));
        }
        let snapshots = a
            .snapshots
            .into_iter()
            .zip(&a.phase_starts)
            .map(|(data, &start)| {
                if data.len() != a.d * a.d {
                    return Err(Error::Data("snapshot has wrong size".into()));
                }
                let m = nalgebra::DMatrix::from_row_slice(a.d, a.d, &data);
                CovarianceSnapshot::from_matrix(start, m)
            })
            .collect::<Result<Vec<_>>>()?;
        MixturePolicy::new(a.lambda_reg, a.alpha, a.m, a.phase_starts, snapshots)
    }
}

impl MixturePolicy {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PolicyArtifact::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<PolicyArtifact>(s)?.try_into()
    }

    /// Little-endian binary artifact.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        let a = PolicyArtifact::from(self);
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&ARTIFACT_VERSION.to_le_bytes())?;
        for v in [a.d as u64, a.m as u64, a.phase_starts.len() as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&a.lambda_reg.to_le_bytes())?;
        w.write_all(&a.alpha.to_le_bytes())?;
        for s in &a.phase_starts {
            w.write_all(&(*s as u64).to_le_bytes())?;
        }
        for snap in &a.snapshots {
            for v in snap {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Data("bad policy magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        let mut b8 = [0u8; 8];
        let mut next_u64 = |r: &mut dyn Read| -> Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let d = next_u64(&mut r)? as usize;
        let m = next_u64(&mut r)? as usize;
        let k = next_u64(&mut r)? as usize;
        if d == 0 || d > 1 << 16 || k > m {
            return Err(Error::Data("corrupt policy header".into()));
        }
        let lambda_reg = f64::from_bits(next_u64(&mut r)?);
        let alpha = f64::from_bits(next_u64(&mut r)?);
        let phase_starts = (0..k)
            .map(|_| next_u64(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let snapshots = (0..k)
            .map(|_| {
                (0..d * d)
                    .map(|_| next_u64(&mut r).map(f64::from_bits))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        PolicyArtifact {
            format: ARTIFACT_FORMAT.to_owned(),
            version,
            d,
            lambda_reg,
            alpha,
            m,
            phase_starts,
            snapshots,
        }
        .try_into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{stream_rng, ActionFeatures};
    use rand::Rng;

    fn ctx(rows: Vec<Vec<f64>>) -> Context {
        Context::new(0, ActionFeatures::from_rows(rows).unwrap())
    }

    fn random_context(d: usize, actions: usize, rng: &mut impl Rng) -> Context {
        let rows = (0..actions)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = crate::model::norm2(&v);
                v.iter().map(|x| x / n.max(1.0)).collect()
            })
            .collect();
        ctx(rows)
    }

    #[test]
    fn single_step_takes_euclidean_argmax() {
        let c = ctx(vec![vec![1.0, 0.0], vec![0.0, 0.5]]);
        let cfg = ExperimentConfig::new(1, 1, 1.0);
        let (policy, trace) = plan([c], &cfg).unwrap();
        assert_eq!(trace.actions, vec![0]);
        assert_eq!(policy.n_phases(), 1);
        assert_eq!(trace.lazy, vec![1.0]);
    }

    #[test]
    fn empty_and_short_streams_are_rejected() {
        let cfg = ExperimentConfig::new(3, 3, 1.0);
        assert!(matches!(plan(Vec::<Context>::new(), &cfg), Err(Error::Config(_))));
        let c = ctx(vec![vec![1.0, 0.0]]);
        assert!(matches!(plan(vec![c.clone(), c], &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn dimension_mismatch_is_a_contract_violation() {
        let cfg = ExperimentConfig::new(2, 2, 1.0);
        let a = ctx(vec![vec![1.0, 0.0]]);
        let b = ctx(vec![vec![1.0, 0.0, 0.0]]);
        assert!(matches!(plan(vec![a, b], &cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn snapshot_count_respects_switch_bound() {
        let mut rng = stream_rng(21, 0);
        let contexts: Vec<Context> = (0..100).map(|_| random_context(5, 6, &mut rng)).collect();
        let cfg = ExperimentConfig::new(100, 100, 1.0);
        let (policy, _) = plan(&contexts, &cfg).unwrap();
        // 5·log₂(21) ≈ 21.96
        assert!(policy.n_phases() <= 21);
        assert_eq!(policy.phase_lengths().iter().sum::<usize>(), 100);
    }

    #[test]
    fn planning_is_deterministic_and_reward_free() {
        let mut rng = stream_rng(4, 0);
        let contexts: Vec<Context> = (0..50).map(|_| random_context(3, 4, &mut rng)).collect();
        let cfg = ExperimentConfig::new(50, 50, 1.0);
        let a = plan(&contexts, &cfg).unwrap();
        let b = plan(&contexts, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn phase_selection_frequency_tracks_phase_length() {
        let s1 = CovarianceSnapshot::from_matrix(1, nalgebra::DMatrix::identity(2, 2)).unwrap();
        let s2 = CovarianceSnapshot::from_matrix(
            31,
            nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![10.0, 1.0])),
        )
        .unwrap();
        let policy = MixturePolicy::new(1.0, 1.0, 100, vec![1, 31], vec![s1, s2]).unwrap();
        assert_eq!(policy.phase_lengths(), vec![30, 70]);
        // phase 1 picks e₁ (tie → lowest index), phase 2 picks e₂
        let c = ctx(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let mut rng = stream_rng(8, 0);
        let n = 100_000;
        let first = (0..n)
            .filter(|_| policy.policy_action(&c, &mut rng).unwrap() == 0)
            .count();
        // binomial sd ≈ 0.00145
        assert!((first as f64 / n as f64 - 0.30).abs() <= 0.01);
    }

    #[test]
    fn frozen_metric_prefers_less_explored_direction() {
        let snap = CovarianceSnapshot::from_matrix(
            1,
            nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![10.0, 1.0])),
        )
        .unwrap();
        let policy = MixturePolicy::new(1.0, 1.0, 1, vec![1], vec![snap]).unwrap();
        let c = ctx(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let mut rng = stream_rng(0, 0);
        assert_eq!(policy.policy_action(&c, &mut rng).unwrap(), 1);

        let eye = CovarianceSnapshot::from_matrix(1, nalgebra::DMatrix::identity(2, 2)).unwrap();
        let policy = MixturePolicy::new(1.0, 1.0, 1, vec![1], vec![eye]).unwrap();
        let c = ctx(vec![vec![1.0, 0.0], vec![0.0, 0.9]]);
        assert_eq!(policy.policy_action(&c, &mut rng).unwrap(), 0);
    }

    #[test]
    fn artifact_round_trips_bit_exactly() {
        let mut rng = stream_rng(17, 0);
        let contexts: Vec<Context> = (0..80).map(|_| random_context(4, 5, &mut rng)).collect();
        let cfg = ExperimentConfig::new(80, 8, 0.7);
        let (policy, _) = plan(&contexts, &cfg).unwrap();
        let back = MixturePolicy::from_json(&policy.to_json().unwrap()).unwrap();
        assert_eq!(back, policy);
        let mut buf = Vec::new();
        policy.write_binary(&mut buf).unwrap();
        let back = MixturePolicy::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, policy);
        for (a, b) in back.snapshots().iter().zip(policy.snapshots()) {
            assert!(a
                .matrix()
                .iter()
                .zip(b.matrix().iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert!(MixturePolicy::read_binary(&buf[..20]).is_err());
    }

    #[test]
    fn switch_bound_values() {
        assert!((switch_bound(5, 100, 1.0) - 5.0 * 21f64.log2()).abs() < 1e-12);
        assert!((switch_bound(2, 1000, 10.0) - 2.0 * 51f64.log2()).abs() < 1e-12);
    }
}
