//! Comparison strategies. None of them reads rewards.

use rand::{Rng, RngCore};

use crate::error::Result;
use crate::estimator::{ridge_fit, RidgeEstimate};
use crate::model::{argmax, norm2, BanditInstance, Context, InteractionDataset, InteractionRecord};
use crate::policy::ExplorationPolicy;

/// Uniform over the context's actions.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformRandom;

impl ExplorationPolicy for UniformRandom {
    fn name(&self) -> &str {
        "random"
    }

    fn choose(&self, context: &Context, rng: &mut dyn RngCore) -> usize {
        rng.random_range(0..context.n_actions())
    }
}

/// Action with the largest Euclidean feature norm, lowest index on ties.
#[derive(Debug, Clone, Copy, Default)]
pub struct LargestNorm;

impl ExplorationPolicy for LargestNorm {
    fn name(&self) -> &str {
        "largest_norm"
    }

    fn choose(&self, context: &Context, _rng: &mut dyn RngCore) -> usize {
        argmax(context.features.rows().map(norm2))
    }
}

/// Always plays one fixed action, clamped to the last available one.
#[derive(Debug, Clone, Copy)]
pub struct SingleAction {
    index: usize,
}

impl SingleAction {
    pub fn new(index: usize) -> Self {
        Self { index }
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

impl ExplorationPolicy for SingleAction {
    fn name(&self) -> &str {
        "single_action"
    }

    fn choose(&self, context: &Context, _rng: &mut dyn RngCore) -> usize {
        let last = context.n_actions() - 1;
        if self.index > last {
            log::warn!("single action {} clamped to {last}", self.index);
            last
        } else {
            self.index
        }
    }
}

/// Every action of every context with a drawn reward: the full-feedback
/// dataset behind the supervised reference.
pub fn full_feedback(
    instance: &BanditInstance,
    contexts: &[Context],
    rng: &mut dyn RngCore,
) -> Result<InteractionDataset> {
    let mut ds = InteractionDataset::new(instance.dim());
    for c in contexts {
        for a in 0..c.n_actions() {
            ds.push(InteractionRecord {
                context_id: c.id,
                action_index: a,
                feature: c.feature(a).to_vec(),
                reward: instance.draw_reward(c, a, rng),
            })?;
        }
    }
    Ok(ds)
}

/// Ridge fit on a full-feedback dataset.
pub fn supervised_oracle_fit(full_feedback: &InteractionDataset, lambda_reg: f64) -> Result<RidgeEstimate> {
    ridge_fit(full_feedback, lambda_reg)
}
