//! Experiment driver for the planner/sampler pipeline: multi-trial runs
//! against the baselines, metric and summary emission, action histograms.

mod config;
mod histogram;
mod run;
mod summary;

pub use config::{tabular_instance, Algorithm, Environment, RunConfig};
pub use histogram::{action_histogram, emit_action_histogram, write_histogram, ActionFrequency};
pub use run::{
    eval_points, read_metrics_csv, run_experiment, run_lambda_sweep, run_trials, write_metrics_csv, AlgorithmActions,
    ExperimentOutput, MetricRow,
};
pub use summary::{summarize, AlgorithmSummary, CurvePoint, Stat, Summary};
