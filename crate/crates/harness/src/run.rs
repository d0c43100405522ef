use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use linexplore::baselines::{LargestNorm, SingleAction, UniformRandom};
use linexplore::estimator::{evaluate, evaluate_value, RidgeAccumulator};
use linexplore::planner::plan;
use linexplore::sampler::sample_stream;
use linexplore::{
    stream_rng, streams, trial_seed, BanditInstance, Context, Error, ExperimentConfig, ExplorationPolicy,
    InteractionDataset, Result,
};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{tabular_instance, Algorithm, RunConfig};
use crate::histogram::{action_histogram, write_histogram, ActionFrequency};
use crate::summary::{summarize, Summary};

/// One evaluation point of one algorithm in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub algorithm: Algorithm,
    pub trial: usize,
    /// Online rewards observed, or contexts seen for the supervised oracle.
    pub n_samples_seen: usize,
    pub policy_value: f64,
    pub expected_suboptimality: Option<f64>,
    pub expected_max_uncertainty: Option<f64>,
    pub wall_time_ms: f64,
}

/// Actions chosen online by one algorithm, pooled over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmActions {
    pub algorithm: Algorithm,
    pub histogram: Vec<ActionFrequency>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    /// Sorted by `(algorithm, trial, n_samples_seen)`.
    pub rows: Vec<MetricRow>,
    pub summary: Summary,
    pub actions: Vec<AlgorithmActions>,
}

/// Sample counts at which every algorithm is refit and evaluated.
pub fn eval_points(n: usize, every: usize) -> Vec<usize> {
    let mut pts: Vec<usize> = (1..=n / every).map(|k| k * every).collect();
    if !n.is_multiple_of(every) {
        pts.push(n);
    }
    pts
}

struct TrialSetup {
    instance: BanditInstance,
    offline: Vec<Context>,
    online: Vec<Context>,
    eval: Vec<Context>,
    config: ExperimentConfig,
    simulated: bool,
}

struct TrialResult {
    rows: Vec<MetricRow>,
    actions: Vec<(Algorithm, Vec<usize>)>,
}

fn simulated_setup(cfg: &RunConfig, seed: u64) -> Result<TrialSetup> {
    let instance = cfg
        .environment
        .simulated(seed)?
        .ok_or_else(|| Error::Config("not a simulated environment".into()))?;
    let e = &cfg.experiment;
    Ok(TrialSetup {
        offline: instance.draw_contexts(e.m, &mut stream_rng(seed, streams::OFFLINE)),
        online: instance.draw_contexts(e.n, &mut stream_rng(seed, streams::ONLINE)),
        eval: instance.draw_contexts(cfg.eval_set_size, &mut stream_rng(seed, streams::EVAL)),
        config: e.clone(),
        instance,
        simulated: true,
    })
}

/// Shuffles the training queries, gives the first half to the planner and
/// streams the rest online, each capped by the configured sizes.
fn rank_setup(cfg: &RunConfig, train: &[Context], test: &[Context], seed: u64) -> Result<TrialSetup> {
    let mut order = train.to_vec();
    order.shuffle(&mut stream_rng(seed, streams::ONLINE));
    let half = order.len() / 2;
    let m = half.min(cfg.experiment.m);
    let n = (order.len() - half).min(cfg.experiment.n);
    if m == 0 || n == 0 {
        return Err(Error::Data(format!(
            "{} training queries are too few for an offline and an online split",
            order.len()
        )));
    }
    let online = order[half..half + n].to_vec();
    let offline = order[..m].to_vec();
    let mut config = cfg.experiment.clone();
    config.m = m;
    config.n = n;
    if config.alpha.is_none() {
        config.alpha = Some((n as f64 / m as f64).min(1.0));
    }
    config.validate()?;
    Ok(TrialSetup {
        instance: tabular_instance("rank", train.to_vec())?,
        offline,
        online,
        eval: test.to_vec(),
        config,
        simulated: false,
    })
}

fn algorithm_seed(trial_master: u64, algorithm: Algorithm) -> u64 {
    let idx = Algorithm::ALL.iter().position(|a| *a == algorithm).unwrap_or(0);
    trial_seed(trial_master, 1000 + idx as u64)
}

fn run_trial(cfg: &RunConfig, trial: usize, setup: &TrialSetup, trial_master: u64) -> Result<TrialResult> {
    let lambda = setup.config.lambda_reg;
    let d = setup.instance.dim();
    let points = eval_points(setup.online.len(), cfg.eval_every);
    let mut rows = Vec::new();
    let mut actions = Vec::new();
    for &algorithm in &cfg.algorithms {
        let start = Instant::now();
        let elapsed = |start: &Instant| {
            if cfg.record_wall_time {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            }
        };
        let mut emit = |n: usize, acc: &RidgeAccumulator, start: &Instant| -> Result<()> {
            let est = acc.estimate()?;
            let report = if cfg.track_uncertainty {
                evaluate(&est, &setup.instance, &setup.eval)?
            } else {
                evaluate_value(&est, &setup.instance, &setup.eval)?
            };
            rows.push(MetricRow {
                algorithm,
                trial,
                n_samples_seen: n,
                policy_value: report.policy_value,
                expected_suboptimality: setup.simulated.then_some(report.expected_suboptimality),
                expected_max_uncertainty: cfg.track_uncertainty.then_some(report.expected_max_uncertainty),
                wall_time_ms: elapsed(start),
            });
            Ok(())
        };
        let mut noise = stream_rng(trial_master, streams::NOISE);
        let mut acc = RidgeAccumulator::new(d, lambda)?;
        if algorithm == Algorithm::SupervisedOracle {
            let mut next = points.iter().peekable();
            for (i, c) in setup.online.iter().enumerate() {
                for a in 0..c.n_actions() {
                    acc.push(c.feature(a), setup.instance.draw_reward(c, a, &mut noise))?;
                }
                if next.peek() == Some(&&(i + 1)) {
                    next.next();
                    emit(i + 1, &acc, &start)?;
                }
            }
            continue;
        }
        let policy: Box<dyn ExplorationPolicy> = match algorithm {
            Algorithm::PlannerSampler => Box::new(plan(&setup.offline, &setup.config)?.0),
            Algorithm::Random => Box::new(UniformRandom),
            Algorithm::LargestNorm => Box::new(LargestNorm),
            Algorithm::SingleAction => Box::new(SingleAction::new(cfg.single_action_index)),
            Algorithm::SupervisedOracle => unreachable!(),
        };
        let mut policy_rng = stream_rng(algorithm_seed(trial_master, algorithm), streams::POLICY);
        let ds: InteractionDataset = sample_stream(
            policy.as_ref(),
            &setup.instance,
            &setup.online,
            &mut policy_rng,
            &mut noise,
        )?;
        let mut next = points.iter().peekable();
        for (i, r) in ds.records().iter().enumerate() {
            acc.push(&r.feature, r.reward)?;
            if next.peek() == Some(&&(i + 1)) {
                next.next();
                emit(i + 1, &acc, &start)?;
            }
        }
        actions.push((algorithm, ds.records().iter().map(|r| r.action_index).collect()));
    }
    Ok(TrialResult { rows, actions })
}

/// Runs every trial in parallel and aggregates rows, summary and action
/// histograms without touching the filesystem.
pub fn run_trials(cfg: &RunConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let seed = cfg.experiment.seed;
    let rank = cfg.environment.rank_data(seed)?;
    let results: Vec<TrialResult> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|t| {
            let s = trial_seed(seed, t as u64);
            let setup = match &rank {
                Some(data) => rank_setup(cfg, &data.train, &data.test, s)?,
                None => simulated_setup(cfg, s)?,
            };
            log::debug!("trial {t}: M={}, N={}", setup.offline.len(), setup.online.len());
            run_trial(cfg, t, &setup, s)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut pooled: Vec<(Algorithm, Vec<usize>)> = Vec::new();
    for r in results {
        rows.extend(r.rows);
        for (alg, acts) in r.actions {
            match pooled.iter_mut().find(|(a, _)| *a == alg) {
                Some((_, v)) => v.extend(acts),
                None => pooled.push((alg, acts)),
            }
        }
    }
    rows.sort_by_key(|r| (r.algorithm, r.trial, r.n_samples_seen));
    pooled.sort_by_key(|(a, _)| *a);
    let actions = pooled
        .into_iter()
        .map(|(algorithm, acts)| AlgorithmActions {
            algorithm,
            histogram: action_histogram(acts, 0),
        })
        .collect();
    let summary = summarize(&rows);
    Ok(ExperimentOutput { rows, summary, actions })
}

pub fn write_metrics_csv(rows: &[MetricRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Runs the experiment and writes `config.json`, `metrics.csv`,
/// `summary.json` and `histograms/<algorithm>.csv` under the output path.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let out = run_trials(cfg)?;
    let dir = &cfg.output_path;
    fs::create_dir_all(dir.join("histograms"))?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("config.json"))?), cfg)?;
    write_metrics_csv(&out.rows, &dir.join("metrics.csv"))?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("summary.json"))?), &out.summary)?;
    for a in &out.actions {
        write_histogram(
            &a.histogram,
            File::create(dir.join("histograms").join(format!("{}.csv", a.algorithm)))?,
        )?;
    }
    log::info!("wrote {} metric rows to {}", out.rows.len(), dir.display());
    Ok(out)
}

/// One experiment per regularization value, each in `lambda_<value>/`.
pub fn run_lambda_sweep(cfg: &RunConfig, lambdas: &[f64]) -> Result<Vec<ExperimentOutput>> {
    let configs: Vec<RunConfig> = lambdas
        .iter()
        .map(|&l| {
            let mut c = cfg.clone();
            c.experiment.lambda_reg = l;
            c.output_path = cfg.output_path.join(format!("lambda_{l}"));
            c.validate().map(|_| c)
        })
        .collect::<Result<_>>()?;
    configs.iter().map(run_experiment).collect()
}
