use std::sync::Arc;

use crate::error::{config, Result};
use crate::model::{ActionFeatures, BanditInstance, Context, FiniteContexts};

fn unit(d: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    v
}

/// One context, `d = 2`: action 0 is `e₁`, every other action is `e₂`.
/// Uniform exploration wastes most samples on the duplicated direction.
pub fn make_hard_uniform(n_actions: usize) -> Result<BanditInstance> {
    if n_actions < 2 {
        return Err(config("the uniform hard instance needs at least 2 actions"));
    }
    let rows = (0..n_actions).map(|a| unit(2, usize::from(a > 0))).collect();
    let ctx = Context::new(0, ActionFeatures::from_rows(rows)?);
    BanditInstance::new(
        format!("hard_uniform_{n_actions}"),
        vec![1.0, 0.0],
        1.0,
        Arc::new(FiniteContexts::uniform(vec![ctx])?),
    )
}

/// `k` equally likely contexts in `d = 2k`; actions `0..k` are shared unit
/// vectors and action `k` points at a context-specific coordinate.
pub fn make_hard_goptimal(k: usize) -> Result<BanditInstance> {
    if k < 2 {
        return Err(config("the G-optimal hard instance needs k >= 2"));
    }
    let d = 2 * k;
    let contexts = (0..k)
        .map(|i| {
            let mut rows: Vec<Vec<f64>> = (0..k).map(|j| unit(d, j)).collect();
            rows.push(unit(d, i + k));
            Ok(Context::new(i as u64, ActionFeatures::from_rows(rows)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = ((1..=d).map(|i| (i * i) as f64).sum::<f64>()).sqrt();
    let theta = (1..=d).map(|i| i as f64 / scale).collect();
    BanditInstance::new(
        format!("hard_goptimal_{k}"),
        theta,
        1.0,
        Arc::new(FiniteContexts::uniform(contexts)?),
    )
}

/// Context set on which a fixed offline sample of size `m` misrepresents the
/// population covariance when regularization is small.
///
/// Context 0 is rare (probability `1/(dm)`) and has the single action `e₁`;
/// context `s ≥ 1` offers `e_s` and `√(1 - d/m) e_s + √(d/m) e₁`.
pub fn make_nonconcentrating(d: usize, m: usize) -> Result<BanditInstance> {
    if d < 2 || m < d {
        return Err(config("the non-concentrating instance needs d >= 2 and m >= d"));
    }
    let ratio = d as f64 / m as f64;
    let mut contexts = vec![Context::new(0, ActionFeatures::from_rows(vec![unit(d, 0)])?)];
    for s in 1..d {
        let mut tilted = unit(d, s);
        tilted[s] = (1.0 - ratio).sqrt();
        tilted[0] = ratio.sqrt();
        contexts.push(Context::new(
            s as u64,
            ActionFeatures::from_rows(vec![unit(d, s), tilted])?,
        ));
    }
    let rare = 1.0 / (d * m) as f64;
    let mut weights = vec![rare];
    weights.extend(std::iter::repeat_n((1.0 - rare) / (d - 1) as f64, d - 1));
    BanditInstance::new(
        format!("nonconcentrating_{d}_{m}"),
        unit(d, 0),
        1.0,
        Arc::new(FiniteContexts::weighted(contexts, &weights)?),
    )
}
