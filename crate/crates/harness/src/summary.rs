use std::collections::BTreeMap;

use linexplore::estimator::MeanAccumulator;
use serde::{Deserialize, Serialize};

use crate::config::Algorithm;
use crate::run::MetricRow;

/// Mean and standard error across trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

impl Stat {
    fn from_values(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let acc: MeanAccumulator = values.into_iter().collect();
        (acc.count() > 0).then(|| Stat {
            mean: acc.mean(),
            std_err: acc.std_err(),
            count: acc.count(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_samples_seen: usize,
    pub policy_value: Stat,
    pub expected_suboptimality: Option<Stat>,
    pub expected_max_uncertainty: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub trials: usize,
    pub curve: Vec<CurvePoint>,
}

impl AlgorithmSummary {
    /// The last evaluation point.
    pub fn final_point(&self) -> Option<&CurvePoint> {
        self.curve.last()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithms: Vec<AlgorithmSummary>,
}

impl Summary {
    pub fn get(&self, algorithm: Algorithm) -> Option<&AlgorithmSummary> {
        self.algorithms.iter().find(|a| a.algorithm == algorithm)
    }
}

/// Groups rows by algorithm and sample count and averages across trials.
pub fn summarize(rows: &[MetricRow]) -> Summary {
    let mut groups: BTreeMap<Algorithm, BTreeMap<usize, Vec<&MetricRow>>> = BTreeMap::new();
    for r in rows {
        groups
            .entry(r.algorithm)
            .or_default()
            .entry(r.n_samples_seen)
            .or_default()
            .push(r);
    }
    let algorithms = groups
        .into_iter()
        .map(|(algorithm, by_n)| {
            let mut trials: Vec<usize> = by_n.values().flatten().map(|r| r.trial).collect();
            trials.sort_unstable();
            trials.dedup();
            let curve = by_n
                .into_iter()
                .map(|(n, rs)| CurvePoint {
                    n_samples_seen: n,
                    policy_value: Stat::from_values(rs.iter().map(|r| r.policy_value)).expect("groups are nonempty"),
                    expected_suboptimality: Stat::from_values(rs.iter().filter_map(|r| r.expected_suboptimality)),
                    expected_max_uncertainty: Stat::from_values(rs.iter().filter_map(|r| r.expected_max_uncertainty)),
                })
                .collect();
            AlgorithmSummary {
                algorithm,
                trials: trials.len(),
                curve,
            }
        })
        .collect();
    Summary { algorithms }
}
