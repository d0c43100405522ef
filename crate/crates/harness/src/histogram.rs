use std::io::Write;

use linexplore::{Error, InteractionDataset, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionFrequency {
    pub action: usize,
    pub count: usize,
    pub frequency: f64,
}

/// Per-action counts over `actions`, with at least `min_bins` bins.
pub fn action_histogram(actions: impl IntoIterator<Item = usize>, min_bins: usize) -> Vec<ActionFrequency> {
    let mut counts = vec![0usize; min_bins];
    let mut total = 0usize;
    for a in actions {
        if a >= counts.len() {
            counts.resize(a + 1, 0);
        }
        counts[a] += 1;
        total += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(action, count)| ActionFrequency {
            action,
            count,
            frequency: if total == 0 { 0.0 } else { count as f64 / total as f64 },
        })
        .collect()
}

pub fn write_histogram(histogram: &[ActionFrequency], w: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for h in histogram {
        w.serialize(h)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the action-frequency CSV of a dataset and returns the bins.
pub fn emit_action_histogram(dataset: &InteractionDataset, w: impl Write) -> Result<Vec<ActionFrequency>> {
    if dataset.is_empty() {
        return Err(Error::Data("cannot build a histogram from an empty dataset".into()));
    }
    let h = action_histogram(dataset.records().iter().map(|r| r.action_index), 0);
    write_histogram(&h, w)?;
    Ok(h)
}
