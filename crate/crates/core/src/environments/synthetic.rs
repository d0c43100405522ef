use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::model::{norm2, stream_rng, streams, ActionFeatures, BanditInstance, Context, ContextSampler};

pub const SYNTHETIC_DIM: usize = 20;
pub const SYNTHETIC_ACTIONS: usize = 10;
pub const SYNTHETIC_CATEGORIES: usize = 3;
const SPIKE_VARIANCE: f64 = 1.0;
const FLOOR_VARIANCE: f64 = 1e-9;
const SHARED_VARIANCE: f64 = 5.0;
const SHARED_ACTIONS: [usize; 2] = [4, 5];
/// Global feature scale putting the widest coordinate's 6σ inside the unit
/// ball; rows beyond it (probability about 2e-9) are projected.
pub const SYNTHETIC_FEATURE_SCALE: f64 = 1.0 / (6.0 * 2.236_067_977_499_79);
// Actions not used by any category's spike or by the shared pair.
const EXTRA_POOL: [usize; 5] = [3, 6, 7, 8, 9];

/// Per-action diagonal variances for one category. `None` marks an
/// all-zero action.
fn category_layout(category: usize) -> Vec<Option<Vec<f64>>> {
    let d = SYNTHETIC_DIM;
    let mut layout: Vec<Option<Vec<f64>>> = vec![None; SYNTHETIC_ACTIONS];
    let spike_on = |coord: usize, var: f64| {
        let mut v = vec![FLOOR_VARIANCE; d];
        v[coord] = var;
        Some(v)
    };
    layout[category] = spike_on(0, SPIKE_VARIANCE);
    for a in SHARED_ACTIONS {
        layout[a] = spike_on(d - 1, SHARED_VARIANCE);
    }
    for j in 0..2 {
        let action = EXTRA_POOL[(2 * category + j) % EXTRA_POOL.len()];
        layout[action] = spike_on(1 + 2 * category + j, 1.0);
    }
    layout
}

/// Three equally likely categories of Gaussian action features in `d = 20`.
///
/// Raw draws are Gaussian and unbounded; [`ContextSampler::draw`] multiplies
/// them by [`SYNTHETIC_FEATURE_SCALE`], which keeps relative norms intact,
/// and projects the rare row still outside the unit ball.
#[derive(Debug, Clone)]
pub struct SyntheticContexts {
    layouts: Vec<Vec<Option<Vec<f64>>>>,
}

impl Default for SyntheticContexts {
    fn default() -> Self {
        Self {
            layouts: (0..SYNTHETIC_CATEGORIES).map(category_layout).collect(),
        }
    }
}

impl SyntheticContexts {
    /// Diagonal variances of `action` under `category`, zeros for inert actions.
    pub fn variances(&self, category: usize, action: usize) -> Vec<f64> {
        self.layouts[category][action]
            .clone()
            .unwrap_or_else(|| vec![0.0; SYNTHETIC_DIM])
    }

    /// Unprojected Gaussian rows for one context of `category`.
    pub fn draw_raw(&self, category: usize, rng: &mut dyn RngCore) -> Vec<Vec<f64>> {
        self.layouts[category]
            .iter()
            .map(|layout| match layout {
                None => vec![0.0; SYNTHETIC_DIM],
                Some(var) => var
                    .iter()
                    .map(|v| {
                        let z: f64 = StandardNormal.sample(rng);
                        v.sqrt() * z
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn draw_category(&self, rng: &mut dyn RngCore) -> usize {
        rng.random_range(0..SYNTHETIC_CATEGORIES)
    }
}

pub(crate) fn project_to_unit_ball(row: &mut [f64]) {
    let n = norm2(row);
    if n > 1.0 {
        row.iter_mut().for_each(|v| *v /= n);
    }
}

impl ContextSampler for SyntheticContexts {
    fn dim(&self) -> usize {
        SYNTHETIC_DIM
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Context {
        let category = self.draw_category(rng);
        let mut rows = self.draw_raw(category, rng);
        for r in rows.iter_mut() {
            r.iter_mut().for_each(|v| *v *= SYNTHETIC_FEATURE_SCALE);
            project_to_unit_ball(r);
        }
        let features = ActionFeatures::from_rows(rows).expect("synthetic rows are finite");
        Context::new(category as u64, features)
    }
}

/// The ten-action, three-category problem with a random sign pattern on the
/// first `d - 1` coordinates of the parameter and a zero last coordinate.
pub fn make_synthetic(seed: u64) -> BanditInstance {
    let mut rng = stream_rng(seed, streams::ENVIRONMENT);
    let mut theta: Vec<f64> = (0..SYNTHETIC_DIM - 1)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    theta.push(0.0);
    BanditInstance::new("synthetic", theta, 1.0, Arc::new(SyntheticContexts::default()))
        .expect("synthetic instance is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spike_action_variance() {
        let s = SyntheticContexts::default();
        let mut rng = stream_rng(7, 0);
        let n = 10_000;
        let mut sums = [0.0; SYNTHETIC_DIM];
        for _ in 0..n {
            let rows = s.draw_raw(0, &mut rng);
            for (i, v) in rows[0].iter().enumerate() {
                sums[i] += v * v;
            }
        }
        assert!((sums[0] / n as f64 - 1.0).abs() < 0.05);
        assert!(sums[1..].iter().all(|v| v / (n as f64) < 1e-8));
    }

    #[test]
    fn parameter_pattern() {
        for seed in 0..20 {
            let inst = make_synthetic(seed);
            let t = inst.theta_star();
            assert_eq!(t.len(), SYNTHETIC_DIM);
            assert_eq!(t[SYNTHETIC_DIM - 1], 0.0);
            assert!(t[..SYNTHETIC_DIM - 1].iter().all(|v| v.abs() == 1.0));
        }
    }

    #[test]
    fn inert_actions_are_zero_and_rows_are_capped() {
        let s = SyntheticContexts::default();
        let mut rng = stream_rng(8, 0);
        for _ in 0..500 {
            let c = s.draw(&mut rng);
            let cat = c.id as usize;
            for a in 0..SYNTHETIC_ACTIONS {
                let row = c.feature(a);
                assert!(norm2(row) <= 1.0 + 1e-12);
                if s.layouts[cat][a].is_none() {
                    assert!(row.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn draw_scales_raw_rows_uniformly() {
        assert!((SYNTHETIC_FEATURE_SCALE - 1.0 / (6.0 * 5f64.sqrt())).abs() < 1e-15);
        let s = SyntheticContexts::default();
        let (mut a, mut b) = (stream_rng(10, 0), stream_rng(10, 0));
        for _ in 0..200 {
            let c = s.draw(&mut a);
            let cat = s.draw_category(&mut b);
            let raw = s.draw_raw(cat, &mut b);
            for (i, row) in raw.iter().enumerate() {
                for (x, y) in row.iter().zip(c.feature(i)) {
                    assert_eq!(x * SYNTHETIC_FEATURE_SCALE, *y);
                }
            }
        }
    }

    #[test]
    fn layout_uses_unique_coordinates_per_category() {
        let s = SyntheticContexts::default();
        for cat in 0..SYNTHETIC_CATEGORIES {
            let active: Vec<usize> = (0..SYNTHETIC_ACTIONS)
                .filter(|&a| s.layouts[cat][a].is_some())
                .collect();
            assert_eq!(active.len(), 5);
            let mut coords: Vec<usize> = active
                .iter()
                .filter(|a| !SHARED_ACTIONS.contains(a))
                .map(|&a| {
                    let v = s.variances(cat, a);
                    (0..SYNTHETIC_DIM).find(|&i| v[i] >= 1.0).unwrap()
                })
                .collect();
            coords.sort();
            coords.dedup();
            assert_eq!(coords.len(), 3);
            assert_eq!(s.variances(cat, cat)[0], 1.0);
            assert_eq!(s.variances(cat, 4)[SYNTHETIC_DIM - 1], 5.0);
        }
    }

    #[test]
    fn categories_are_uniform() {
        let s = SyntheticContexts::default();
        let mut rng = stream_rng(9, 0);
        let n = 100_000;
        let mut counts = [0f64; 3];
        for _ in 0..n {
            counts[s.draw_category(&mut rng)] += 1.0;
        }
        let e = n as f64 / 3.0;
        let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
        // 0.99 quantile of chi-square with 2 degrees of freedom
        assert!(chi2 < 9.21, "chi2 = {chi2}");
    }
}
