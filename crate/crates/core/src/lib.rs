//! Reward-free exploration for linear contextual bandits.
//!
//! The pipeline has three stages. [`planner::plan`] runs a reward-free
//! exploration pass over offline contexts and freezes a mixture policy.
//! [`sampler::sample`] plays that policy online to collect rewards, and
//! [`estimator::ridge_fit`] turns the data into a greedy policy. The
//! [`lab`] module checks the concentration and potential inequalities the
//! method relies on.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Matrix loops read
// better with explicit indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod covariance;
pub mod environments;
pub mod error;
pub mod estimator;
pub mod lab;
pub mod model;
pub mod planner;
pub mod policy;
pub mod sampler;

pub use error::{Error, Result};
pub use model::{
    stream_rng, streams, trial_seed, ActionFeatures, BanditInstance, Context, ContextSampler, ExperimentConfig,
    FiniteContexts, InteractionDataset, InteractionRecord, SimRng,
};
pub use policy::ExplorationPolicy;
