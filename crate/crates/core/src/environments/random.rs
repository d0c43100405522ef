use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{config, Result};
use crate::model::{norm2, stream_rng, streams, ActionFeatures, BanditInstance, Context, ContextSampler};

/// Contexts whose action features are i.i.d. uniform in the unit ball.
#[derive(Debug, Clone)]
pub struct UnitBallContexts {
    dim: usize,
    n_actions: usize,
}

impl UnitBallContexts {
    pub fn new(dim: usize, n_actions: usize) -> Result<Self> {
        if dim == 0 || n_actions == 0 {
            return Err(config("dimension and action count must be positive"));
        }
        Ok(Self { dim, n_actions })
    }
}

pub(crate) fn unit_ball_point(dim: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = norm2(&v);
    let radius = rng.random::<f64>().powf(1.0 / dim as f64);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x *= radius / n);
    }
    v
}

impl ContextSampler for UnitBallContexts {
    fn dim(&self) -> usize {
        self.dim
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Context {
        let data = (0..self.n_actions)
            .flat_map(|_| unit_ball_point(self.dim, rng))
            .collect();
        let features =
            ActionFeatures::from_row_major(self.n_actions, self.dim, data).expect("unit-ball rows are finite");
        Context::new(0, features)
    }
}

/// Unit-ball contexts with a parameter drawn uniformly on the unit sphere.
pub fn make_unit_ball(dim: usize, n_actions: usize, noise_std: f64, seed: u64) -> Result<BanditInstance> {
    let contexts = UnitBallContexts::new(dim, n_actions)?;
    let mut rng = stream_rng(seed, streams::ENVIRONMENT);
    let mut theta = unit_ball_point(dim, &mut rng);
    let n = norm2(&theta).max(1e-12);
    theta.iter_mut().for_each(|x| *x /= n);
    BanditInstance::new(
        format!("unit_ball_{dim}x{n_actions}"),
        theta,
        noise_std,
        Arc::new(contexts),
    )
}
