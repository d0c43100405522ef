//! Regularized cumulative covariance `λI + α Σ φφᵀ`.
//!
//! The live matrix keeps a Cholesky factor that is patched with rank-one
//! updates, so the log-determinant is available at every step for the
//! doubling test. Snapshots refactor from the raw matrix, which also resyncs
//! the live factor and discards accumulated drift. Inverse norms are always
//! computed by triangular solves against the factor.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{config, contract, Result};
use crate::model::ActionFeatures;

/// Features may exceed the unit ball by at most this much.
pub const NORM_CAP_TOLERANCE: f64 = 1e-9;

/// Evaluates `‖x‖_{Σ⁻¹}` for a positive definite `Σ`.
pub trait InverseMetric {
    fn dim(&self) -> usize;

    fn factor(&self) -> &Cholesky<f64, Dyn>;

    fn mahalanobis(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(contract(format!(
                "vector has length {}, covariance dimension is {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(contract("non-finite vector"));
        }
        let y = self
            .factor()
            .l_dirty()
            .solve_lower_triangular(&DVector::from_column_slice(x))
            .expect("cholesky factor has a positive diagonal");
        Ok(y.norm())
    }

    /// `‖φ(s,a)‖_{Σ⁻¹}` for every action, in one batched solve.
    fn action_norms(&self, features: &ActionFeatures) -> Vec<f64> {
        assert_eq!(features.dim(), self.dim(), "feature dimension mismatch");
        let y = self
            .factor()
            .l_dirty()
            .solve_lower_triangular(&features.columns())
            .expect("cholesky factor has a positive diagonal");
        y.column_iter().map(|c| c.norm()).collect()
    }

    /// `max_a ‖φ(s,a)‖_{Σ⁻¹}` and the lowest maximizing action.
    fn max_uncertainty(&self, features: &ActionFeatures) -> (usize, f64) {
        let norms = self.action_norms(features);
        let a = crate::model::argmax(norms.iter().copied());
        (a, norms[a])
    }
}

fn log_det(factor: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * factor.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

fn factorize(matrix: &DMatrix<f64>) -> Cholesky<f64, Dyn> {
    Cholesky::new(matrix.clone()).expect("regularized covariance is positive definite")
}

/// `λ_reg I + α Σⱼ φⱼφⱼᵀ` with its factor and log-determinant.
#[derive(Clone, Debug)]
pub struct RegularizedCovariance {
    lambda_reg: f64,
    alpha: f64,
    matrix: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    log_det: f64,
    update_count: usize,
}

impl RegularizedCovariance {
    pub fn new(d: usize, lambda_reg: f64, alpha: f64) -> Result<Self> {
        if d == 0 {
            return Err(config("dimension must be at least 1"));
        }
        if !(lambda_reg > 0.0) || !lambda_reg.is_finite() {
            return Err(config(format!("lambda_reg must be positive, got {lambda_reg}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(config(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        let matrix = DMatrix::from_diagonal_element(d, d, lambda_reg);
        let factor = factorize(&matrix);
        Ok(Self {
            lambda_reg,
            alpha,
            log_det: d as f64 * lambda_reg.ln(),
            matrix,
            factor,
            update_count: 0,
        })
    }

    /// Rebuilds a covariance from a stored matrix.
    pub fn from_matrix(lambda_reg: f64, alpha: f64, matrix: DMatrix<f64>, update_count: usize) -> Result<Self> {
        let mut cov = Self::new(matrix.nrows(), lambda_reg, alpha)?;
        if !matrix.is_square() || matrix.iter().any(|v| !v.is_finite()) {
            return Err(contract("covariance matrix must be square and finite"));
        }
        cov.factor =
            Cholesky::new(matrix.clone()).ok_or_else(|| contract("covariance matrix is not positive definite"))?;
        cov.log_det = log_det(&cov.factor);
        cov.matrix = matrix;
        cov.update_count = update_count;
        Ok(cov)
    }

    /// `Σ += α φφᵀ`. Features outside the unit ball are rejected.
    pub fn rank_one_update(&mut self, feature: &[f64]) -> Result<()> {
        let d = self.dim();
        if feature.len() != d {
            return Err(contract(format!(
                "feature has length {}, covariance dimension is {d}",
                feature.len()
            )));
        }
        if feature.iter().any(|v| !v.is_finite()) {
            return Err(contract("non-finite feature"));
        }
        let norm = crate::model::norm2(feature);
        if norm > 1.0 + NORM_CAP_TOLERANCE {
            return Err(contract(format!("feature norm {norm} exceeds 1")));
        }
        self.update_count += 1;
        if norm == 0.0 {
            return Ok(());
        }
        // Upper triangle, mirrored, so the matrix stays exactly symmetric.
        for j in 0..d {
            let fj = self.alpha * feature[j];
            for i in 0..=j {
                let v = self.matrix[(i, j)] + fj * feature[i];
                self.matrix[(i, j)] = v;
                self.matrix[(j, i)] = v;
            }
        }
        let x = DVector::from_column_slice(feature);
        self.factor.rank_one_update(&x, self.alpha);
        self.log_det = log_det(&self.factor);
        Ok(())
    }

    /// Refactors from the raw matrix, discarding drift in the patched factor.
    pub fn refresh(&mut self) {
        self.factor = factorize(&self.matrix);
        self.log_det = log_det(&self.factor);
    }

    /// Freezes the current matrix.
    pub fn snapshot(&mut self, snapshot_index: usize) -> CovarianceSnapshot {
        self.refresh();
        CovarianceSnapshot {
            snapshot_index,
            matrix: self.matrix.clone(),
            factor: self.factor.clone(),
            log_det: self.log_det,
        }
    }

    /// `det(self) / det(snapshot)`, from log-determinants.
    pub fn det_ratio(&self, snapshot: &CovarianceSnapshot) -> f64 {
        (self.log_det - snapshot.log_det).exp()
    }

    /// Solves `Σ θ = b`.
    pub fn solve(&self, b: &[f64]) -> Result<DVector<f64>> {
        if b.len() != self.dim() {
            return Err(contract("right-hand side dimension mismatch"));
        }
        Ok(self.factor.solve(&DVector::from_column_slice(b)))
    }

    pub fn lambda_reg(&self) -> f64 {
        self.lambda_reg
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn update_count(&self) -> usize {
        self.update_count
    }
}

impl InverseMetric for RegularizedCovariance {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn factor(&self) -> &Cholesky<f64, Dyn> {
        &self.factor
    }
}

/// Immutable copy of the covariance taken at a phase start.
#[derive(Clone, Debug)]
pub struct CovarianceSnapshot {
    snapshot_index: usize,
    matrix: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl CovarianceSnapshot {
    /// Rebuilds a snapshot from a stored matrix.
    pub fn from_matrix(snapshot_index: usize, matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(contract("snapshot matrix must be square and nonempty"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(contract("snapshot matrix has non-finite entries"));
        }
        let factor =
            Cholesky::new(matrix.clone()).ok_or_else(|| contract("snapshot matrix is not positive definite"))?;
        let log_det = log_det(&factor);
        Ok(Self {
            snapshot_index,
            matrix,
            factor,
            log_det,
        })
    }

    pub fn snapshot_index(&self) -> usize {
        self.snapshot_index
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }
}

impl InverseMetric for CovarianceSnapshot {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn factor(&self) -> &Cholesky<f64, Dyn> {
        &self.factor
    }
}

impl PartialEq for CovarianceSnapshot {
    fn eq(&self, other: &Self) -> bool {
        self.snapshot_index == other.snapshot_index && self.matrix == other.matrix
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(matrix: &DMatrix<f64>) -> f64 {
    matrix
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
