//! Sparse learning-to-rank files: `label qid:<id> idx:val ...`, one document
//! per line, 1-based feature indices, optional trailing `# comment`.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environments::synthetic::project_to_unit_ball;
use crate::error::{config, Error, Result};
use crate::model::{norm2, stream_rng, streams, ActionFeatures, Context};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankDatasetSpec {
    pub raw_dim: usize,
    pub subsampled_dim: usize,
    pub max_actions: usize,
    pub max_relevance: u8,
    /// Fraction of queries held out for evaluation.
    pub test_fraction: f64,
}

impl Default for RankDatasetSpec {
    fn default() -> Self {
        Self {
            raw_dim: 700,
            subsampled_dim: 300,
            max_actions: 20,
            max_relevance: 4,
            test_fraction: 0.2,
        }
    }
}

impl RankDatasetSpec {
    fn validate(&self) -> Result<()> {
        if self.subsampled_dim == 0 || self.subsampled_dim > self.raw_dim {
            return Err(config("subsampled_dim must lie in 1..=raw_dim"));
        }
        if self.max_actions == 0 {
            return Err(config("max_actions must be positive"));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(config("test_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// One parsed document line.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub relevance: u8,
    pub query: u64,
    /// `(0-based index, value)` pairs.
    pub entries: Vec<(usize, f64)>,
}

/// Parses one non-empty line. `line_no` is 1-based and only used in errors.
pub fn parse_sparse_line(line: &str, line_no: usize, spec: &RankDatasetSpec) -> Result<SparseRow> {
    let err = |message: String| Error::Parse { line: line_no, message };
    let body = line.split('#').next().unwrap_or("");
    let mut tokens = body.split_whitespace();
    let label = tokens.next().ok_or_else(|| err("missing label".into()))?;
    let relevance: u8 = label
        .parse::<f64>()
        .ok()
        .filter(|v| v.fract() == 0.0 && *v >= 0.0 && *v <= spec.max_relevance as f64)
        .map(|v| v as u8)
        .ok_or_else(|| err(format!("invalid relevance label {label:?}")))?;
    let qid = tokens.next().ok_or_else(|| err("missing qid".into()))?;
    let query = qid
        .strip_prefix("qid:")
        .and_then(|q| q.parse().ok())
        .ok_or_else(|| err(format!("invalid query token {qid:?}")))?;
    let entries = tokens
        .map(|tok| {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("invalid feature token {tok:?}")))?;
            let i: usize = i.parse().map_err(|_| err(format!("invalid feature index {i:?}")))?;
            let v: f64 = v.parse().map_err(|_| err(format!("invalid feature value {v:?}")))?;
            if i == 0 || i > spec.raw_dim {
                return Err(err(format!("feature index {i} outside 1..={}", spec.raw_dim)));
            }
            if !v.is_finite() {
                return Err(err(format!("non-finite feature value at index {i}")));
            }
            Ok((i - 1, v))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SparseRow {
        relevance,
        query,
        entries,
    })
}

/// Reads every document line, skipping blanks and comment-only lines.
pub fn parse_sparse(reader: impl BufRead, spec: &RankDatasetSpec) -> Result<Vec<SparseRow>> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        rows.push(parse_sparse_line(trimmed, i + 1, spec)?);
    }
    Ok(rows)
}

/// Ingested contexts plus the coordinates kept by subsampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankData {
    pub subsample_indices: Vec<usize>,
    /// Global divisor applied to every row after subsampling.
    pub scale: f64,
    pub train: Vec<Context>,
    pub test: Vec<Context>,
}

/// Sorted coordinates drawn without replacement.
pub fn subsample_indices(spec: &RankDatasetSpec, seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, streams::ENVIRONMENT);
    let mut idx = index::sample(&mut rng, spec.raw_dim, spec.subsampled_dim).into_vec();
    idx.sort_unstable();
    idx
}

/// Groups rows by query, keeps the first `max_actions` documents of each,
/// subsamples coordinates, scales all rows by one common factor so the
/// largest norm is at most 1, and splits queries into train and test.
pub fn build_rank_data(rows: Vec<SparseRow>, spec: &RankDatasetSpec, seed: u64) -> Result<RankData> {
    spec.validate()?;
    let indices = subsample_indices(spec, seed);
    let position: HashMap<usize, usize> = indices.iter().enumerate().map(|(p, &i)| (i, p)).collect();

    let mut order: Vec<u64> = Vec::new();
    let mut groups: HashMap<u64, Vec<SparseRow>> = HashMap::new();
    for row in rows {
        let group = groups.entry(row.query).or_insert_with(|| {
            order.push(row.query);
            Vec::new()
        });
        group.push(row);
    }

    let mut dense: Vec<(u64, Vec<Vec<f64>>, Vec<f64>)> = Vec::with_capacity(order.len());
    for q in order {
        let docs = &groups[&q];
        if docs.is_empty() {
            log::warn!("query {q} has no documents, skipped");
            continue;
        }
        if docs.len() > spec.max_actions {
            log::debug!("query {q}: truncating {} documents to {}", docs.len(), spec.max_actions);
        }
        let kept = &docs[..docs.len().min(spec.max_actions)];
        let features = kept
            .iter()
            .map(|doc| {
                let mut v = vec![0.0; spec.subsampled_dim];
                for &(i, x) in &doc.entries {
                    if let Some(&p) = position.get(&i) {
                        v[p] = x;
                    }
                }
                v
            })
            .collect();
        let relevance = kept.iter().map(|doc| doc.relevance as f64).collect();
        dense.push((q, features, relevance));
    }
    if dense.is_empty() {
        return Err(Error::Data("dataset contains no queries".into()));
    }

    let max_norm = dense
        .iter()
        .flat_map(|(_, f, _)| f.iter().map(|r| norm2(r)))
        .fold(0.0, f64::max);
    let scale = max_norm.max(1.0);
    let mut contexts = dense
        .into_iter()
        .map(|(q, mut rows, rel)| {
            for r in &mut rows {
                r.iter_mut().for_each(|v| *v /= scale);
                // guards against the last ulp of rounding
                project_to_unit_ball(r);
            }
            Context::with_relevance(q, ActionFeatures::from_rows(rows)?, rel)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = stream_rng(seed, streams::EVAL);
    contexts.shuffle(&mut rng);
    let n_test = (spec.test_fraction * contexts.len() as f64).round() as usize;
    let train = contexts.split_off(n_test);
    Ok(RankData {
        subsample_indices: indices,
        scale,
        train,
        test: contexts,
    })
}

/// Reads and ingests a sparse ranking file.
pub fn ingest_rank_dataset(path: &Path, spec: &RankDatasetSpec, seed: u64) -> Result<RankData> {
    let file = fs::File::open(path).map_err(|e| {
        Error::Data(format!(
            "cannot open ranking dataset {}: {e}; see the README section on ranking data",
            path.display()
        ))
    })?;
    let rows = parse_sparse(BufReader::new(file), spec)?;
    build_rank_data(rows, spec, seed)
}

/// Parameters of the synthetic stand-in ranking file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StandInSpec {
    pub n_queries: usize,
    pub min_docs: usize,
    pub max_docs: usize,
    pub raw_dim: usize,
    /// Probability that a coordinate is present in a document.
    pub density: f64,
    pub label_noise: f64,
}

impl Default for StandInSpec {
    fn default() -> Self {
        Self {
            n_queries: 400,
            min_docs: 5,
            max_docs: 30,
            raw_dim: 700,
            density: 0.1,
            label_noise: 0.5,
        }
    }
}

/// Writes a file in the ranking format whose relevance labels follow a
/// hidden linear score plus noise, rounded and clipped to `0..=4`.
pub fn gen_standin(mut w: impl Write, spec: &StandInSpec, seed: u64) -> Result<()> {
    if spec.n_queries == 0 || spec.min_docs == 0 || spec.min_docs > spec.max_docs || spec.raw_dim == 0 {
        return Err(config(
            "stand-in needs queries, 1 <= min_docs <= max_docs and raw_dim >= 1",
        ));
    }
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(config("density must lie in (0, 1]"));
    }
    let mut rng = stream_rng(seed, streams::ENVIRONMENT);
    let weights: Vec<f64> = (0..spec.raw_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    // score = Σ w_i x_i with x_i ~ U(0,1) present w.p. density
    let mean: f64 = weights.iter().sum::<f64>() * spec.density * 0.5;
    let var: f64 = weights.iter().map(|w| w * w).sum::<f64>() * (spec.density / 3.0 - (spec.density * 0.5).powi(2));
    let sd = var.sqrt().max(1e-12);
    for q in 1..=spec.n_queries {
        let n_docs = rng.random_range(spec.min_docs..=spec.max_docs);
        for _ in 0..n_docs {
            let mut line = String::new();
            let mut score = 0.0;
            let mut entries = Vec::new();
            for (i, w) in weights.iter().enumerate() {
                if rng.random_bool(spec.density) {
                    let x: f64 = rng.random();
                    score += w * x;
                    entries.push((i + 1, x));
                }
            }
            let z = (score - mean) / sd + spec.label_noise * rng.random_range(-1.0..1.0);
            let label = (2.0 + 1.2 * z).round().clamp(0.0, 4.0) as u8;
            line.push_str(&format!("{label} qid:{q}"));
            for (i, x) in entries {
                line.push_str(&format!(" {i}:{x:.6}"));
            }
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> RankDatasetSpec {
        RankDatasetSpec {
            raw_dim: 12,
            subsampled_dim: 12,
            max_actions: 20,
            max_relevance: 4,
            test_fraction: 0.0,
        }
    }

    #[test]
    fn parses_line() {
        let row = parse_sparse_line("2 qid:7 3:0.5 10:1.0", 1, &small_spec()).unwrap();
        assert_eq!(row.relevance, 2);
        assert_eq!(row.query, 7);
        assert_eq!(row.entries, vec![(2, 0.5), (9, 1.0)]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "1 qid:1 1:0.5\n\n0 qid:1 2:abc\n";
        match parse_sparse(text.as_bytes(), &small_spec()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        for bad in [
            "9 qid:1 1:0.5",
            "1 q:1 1:0.5",
            "1 qid:1 0:0.5",
            "1 qid:1 13:0.5",
            "1 qid:1 3",
        ] {
            assert!(parse_sparse_line(bad, 1, &small_spec()).is_err(), "{bad}");
        }
    }

    #[test]
    fn truncates_and_normalizes() {
        let mut text = String::new();
        for i in 0..35 {
            text.push_str(&format!("{} qid:5 1:{} 4:3.0\n", i % 5, i as f64));
        }
        text.push_str("4 qid:6 2:0.1\n");
        let rows = parse_sparse(text.as_bytes(), &small_spec()).unwrap();
        let data = build_rank_data(rows, &small_spec(), 0).unwrap();
        assert_eq!(data.train.len(), 2);
        let q5 = data.train.iter().find(|c| c.id == 5).unwrap();
        assert_eq!(q5.n_actions(), 20);
        for c in &data.train {
            for r in c.features.rows() {
                assert!(norm2(r) <= 1.0 + 1e-9);
            }
        }
        let q6 = data.train.iter().find(|c| c.id == 6).unwrap();
        assert_eq!(q6.relevance.as_deref(), Some(&[4.0][..]));
    }

    #[test]
    fn ingestion_is_deterministic_and_subsamples_without_replacement() {
        let spec = RankDatasetSpec {
            raw_dim: 50,
            subsampled_dim: 20,
            test_fraction: 0.25,
            ..RankDatasetSpec::default()
        };
        let a = subsample_indices(&spec, 3);
        assert_eq!(a, subsample_indices(&spec, 3));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a.len(), 20);

        let mut file = Vec::new();
        let standin = StandInSpec {
            n_queries: 40,
            raw_dim: 50,
            ..StandInSpec::default()
        };
        gen_standin(&mut file, &standin, 1).unwrap();
        let x = build_rank_data(parse_sparse(file.as_slice(), &spec).unwrap(), &spec, 3).unwrap();
        let y = build_rank_data(parse_sparse(file.as_slice(), &spec).unwrap(), &spec, 3).unwrap();
        assert_eq!(x, y);
        assert_eq!(x.test.len(), 10);
        assert_eq!(x.train.len(), 30);
    }

    #[test]
    fn standin_labels_span_range() {
        let mut file = Vec::new();
        gen_standin(&mut file, &StandInSpec::default(), 2).unwrap();
        let rows = parse_sparse(file.as_slice(), &RankDatasetSpec::default()).unwrap();
        let mut seen = [false; 5];
        for r in &rows {
            seen[r.relevance as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
