use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use linexplore::environments::{
    build_rank_data, gen_standin, ingest_rank_dataset, make_hard_goptimal, make_hard_uniform, make_synthetic,
    parse_sparse, RankData, RankDatasetSpec, StandInSpec,
};
use linexplore::{BanditInstance, Error, ExperimentConfig, FiniteContexts, Result};
use serde::{Deserialize, Serialize};

/// Where contexts and rewards come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Environment {
    Synthetic,
    HardUniform {
        n_actions: usize,
    },
    HardGoptimal {
        k: usize,
    },
    RankDataset {
        path: PathBuf,
        #[serde(default)]
        spec: RankDatasetSpec,
    },
    StandIn {
        #[serde(default)]
        standin: StandInSpec,
        #[serde(default)]
        spec: RankDatasetSpec,
    },
}

impl Environment {
    pub fn is_simulated(&self) -> bool {
        matches!(
            self,
            Environment::Synthetic | Environment::HardUniform { .. } | Environment::HardGoptimal { .. }
        )
    }

    /// Simulated instance for one trial.
    pub fn simulated(&self, seed: u64) -> Result<Option<BanditInstance>> {
        Ok(match self {
            Environment::Synthetic => Some(make_synthetic(seed)),
            Environment::HardUniform { n_actions } => Some(make_hard_uniform(*n_actions)?),
            Environment::HardGoptimal { k } => Some(make_hard_goptimal(*k)?),
            _ => None,
        })
    }

    /// Ingested ranking data, for the two tabular environments.
    pub fn rank_data(&self, seed: u64) -> Result<Option<RankData>> {
        match self {
            Environment::RankDataset { path, spec } => {
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "ranking dataset {} not found; see \"Ranking data\" in the README for how to obtain and \
                         convert it, or use the stand_in environment",
                        path.display()
                    )));
                }
                Ok(Some(ingest_rank_dataset(path, spec, seed)?))
            }
            Environment::StandIn { standin, spec } => {
                let mut file = Vec::new();
                let standin = StandInSpec {
                    raw_dim: spec.raw_dim,
                    ..standin.clone()
                };
                gen_standin(&mut file, &standin, seed)?;
                let rows = parse_sparse(file.as_slice(), spec)?;
                Ok(Some(build_rank_data(rows, spec, seed)?))
            }
            _ => Ok(None),
        }
    }
}

impl FromStr for Environment {
    type Err = String;

    /// `synthetic`, `hard_uniform:A`, `hard_goptimal:k`, `rank_dataset:PATH`
    /// or `stand_in`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let number = |a: Option<&str>| {
            a.ok_or_else(|| format!("{kind} needs a numeric argument, e.g. {kind}:10"))?
                .parse::<usize>()
                .map_err(|e| format!("{kind}: {e}"))
        };
        match kind.replace('-', "_").as_str() {
            "synthetic" => Ok(Environment::Synthetic),
            "hard_uniform" => Ok(Environment::HardUniform {
                n_actions: number(arg)?,
            }),
            "hard_goptimal" => Ok(Environment::HardGoptimal { k: number(arg)? }),
            "rank_dataset" => Ok(Environment::RankDataset {
                path: arg
                    .ok_or("rank_dataset needs a path, e.g. rank_dataset:train.txt")?
                    .into(),
                spec: RankDatasetSpec::default(),
            }),
            "stand_in" => Ok(Environment::StandIn {
                standin: StandInSpec::default(),
                spec: RankDatasetSpec::default(),
            }),
            other => Err(format!("unknown environment {other:?}")),
        }
    }
}

/// Tabular instance over a fixed context pool with relevance rewards.
pub fn tabular_instance(name: &str, contexts: Vec<linexplore::Context>) -> Result<BanditInstance> {
    let d = contexts
        .first()
        .map(|c| c.dim())
        .ok_or_else(|| Error::Data("no contexts".into()))?;
    BanditInstance::new(name, vec![0.0; d], 0.0, Arc::new(FiniteContexts::uniform(contexts)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    PlannerSampler,
    Random,
    LargestNorm,
    SingleAction,
    SupervisedOracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::PlannerSampler,
        Algorithm::Random,
        Algorithm::LargestNorm,
        Algorithm::SingleAction,
        Algorithm::SupervisedOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::PlannerSampler => "planner_sampler",
            Algorithm::Random => "random",
            Algorithm::LargestNorm => "largest_norm",
            Algorithm::SingleAction => "single_action",
            Algorithm::SupervisedOracle => "supervised_oracle",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.replace('-', "_");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?}"))
    }
}

fn default_eval_every() -> usize {
    20
}

fn default_eval_set_size() -> usize {
    1000
}

fn default_true() -> bool {
    true
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub environment: Environment,
    pub algorithms: Vec<Algorithm>,
    /// Sizes are caps for ranking data, where they also depend on the file.
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
    pub n_trials: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Held-out contexts for simulated environments.
    #[serde(default = "default_eval_set_size")]
    pub eval_set_size: usize,
    pub output_path: PathBuf,
    #[serde(default)]
    pub single_action_index: usize,
    /// Whether metric rows include the expected max uncertainty.
    #[serde(default = "default_true")]
    pub track_uncertainty: bool,
    /// Wall times make reruns differ; disable for byte-identical output.
    #[serde(default = "default_true")]
    pub record_wall_time: bool,
}

impl RunConfig {
    pub fn new(environment: Environment, experiment: ExperimentConfig, n_trials: usize, output_path: PathBuf) -> Self {
        Self {
            environment,
            algorithms: Algorithm::ALL.to_vec(),
            experiment,
            n_trials,
            eval_every: default_eval_every(),
            eval_set_size: default_eval_set_size(),
            output_path,
            single_action_index: 0,
            track_uncertainty: true,
            record_wall_time: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required");
        }
        if self.experiment.n == 0 {
            return bad("N must be positive");
        }
        if self.environment.is_simulated() {
            if self.eval_set_size == 0 {
                return bad("eval_set_size must be positive");
            }
            self.experiment.validate()?;
        } else {
            // sizes are caps; validate the remaining fields with a placeholder split
            let mut probe = self.experiment.clone();
            probe.m = probe.m.max(1);
            probe.n = probe.n.min(probe.m);
            probe.validate()?;
        }
        if let Environment::RankDataset { path, .. } = &self.environment {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "ranking dataset {} not found; see \"Ranking data\" in the README",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}
