//! Instance generators: the three-category synthetic problem, small hard
//! instances with closed-form designs, and sparse ranking-file ingestion.

mod hard;
mod ltr;
mod random;
mod synthetic;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::model::Context;

pub use hard::{make_hard_goptimal, make_hard_uniform, make_nonconcentrating};
pub use ltr::{
    build_rank_data, gen_standin, ingest_rank_dataset, parse_sparse, parse_sparse_line, subsample_indices, RankData,
    RankDatasetSpec, SparseRow, StandInSpec,
};
#[cfg(test)]
pub(crate) use random::unit_ball_point;
pub use random::{make_unit_ball, UnitBallContexts};
pub use synthetic::{
    make_synthetic, SyntheticContexts, SYNTHETIC_ACTIONS, SYNTHETIC_CATEGORIES, SYNTHETIC_DIM, SYNTHETIC_FEATURE_SCALE,
};

/// A list of contexts sharing one feature dimension, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub dim: usize,
    pub contexts: Vec<Context>,
}

impl ContextBundle {
    pub fn new(contexts: Vec<Context>) -> Result<Self> {
        let dim = contexts.first().map(Context::dim).unwrap_or(0);
        if contexts.iter().any(|c| c.dim() != dim) {
            return Err(contract("contexts disagree on feature dimension"));
        }
        Ok(Self { dim, contexts })
    }

    pub fn write_json(&self, w: impl Write) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn read_json(r: impl Read) -> Result<Self> {
        let bundle: Self = serde_json::from_reader(r)?;
        Self::new(bundle.contexts)
    }
}
