use serde::{Deserialize, Serialize};

/// Upper bound on the sum of conditional means of a `[0, 1]`-valued adapted
/// process, given its realized sum. Holds with probability `1 - δ`.
pub fn reverse_bernstein_bound(sum_x: f64, delta: f64) -> f64 {
    let l = (1.0 / delta).ln();
    let c1 = 2.0 * l.sqrt();
    let c2 = 2.0 * l;
    0.25 * (c1 + (c1 * c1 + 4.0 * (sum_x + c2)).sqrt()).powi(2)
}

/// Upper bound on the sum of an adapted process bounded above by 1, given
/// the sum of its conditional second moments. Holds with probability `1 - δ`.
pub fn bernstein_bound(sum_cond_var: f64, delta: f64) -> f64 {
    let l = (1.0 / delta).ln();
    2.0 * (sum_cond_var * l).sqrt() + 2.0 * l
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChernoffTail {
    /// `λ_min(Σ X) ≤ (1 - t) μ_min`
    Min,
    /// `λ_max(Σ X) ≥ (1 + t) μ_max`
    Max,
    /// `λ_max(Σ X) ≥ 2μ` for any `μ ≥ μ_max`; the deviation is ignored.
    Doubling,
}

/// Probability bound for a sum of independent PSD matrices with
/// `λ_max(X_k) ≤ r`.
pub fn matrix_chernoff_tail(mu: f64, r: f64, deviation: f64, d: usize, tail: ChernoffTail) -> f64 {
    let d = d as f64;
    match tail {
        ChernoffTail::Min => d * (1.0 - deviation * deviation / 2.0).powf(mu / r),
        ChernoffTail::Max => d * (1.0 - deviation * deviation / 4.0).powf(mu / r),
        ChernoffTail::Doubling => d * (-mu / (4.0 * r)).exp(),
    }
}

/// Violation threshold for a Monte-Carlo estimate of a `δ`-probability
/// event over `trials` runs: `δ + 3√(δ / trials)`.
pub fn coverage_threshold(delta: f64, trials: usize) -> f64 {
    delta + 3.0 * (delta / trials as f64).sqrt()
}
