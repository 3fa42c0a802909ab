//! Ridge-regression readout.
//!
//! Minimizes `sum ||W_out r_n - z_n||^2 + lambda Tr(W_out W_out^T)` through
//! the normal equations `(R^T R + lambda I) W_out^T = R^T Z`. The Gram
//! matrix and cross term are accumulated in fixed-size sample blocks in
//! increasing sample order, so memory stays O(N^2) beyond the state record
//! and the result does not depend on scheduling.

use nalgebra::{Cholesky, DMatrix, DMatrixView, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lorenz::State3;
use crate::reservoir::{StateMatrix, INPUT_DIM};

const BLOCK: usize = 512;
const EIGEN_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    pub lambda: f64,
    /// Leading state/target pairs excluded from the fit.
    pub washout: usize,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            washout: 100,
        }
    }
}

impl RidgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Fitted `3 x N` readout.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub weights: DMatrix<f64>,
    /// Set when the least-norm eigen solve replaced the Cholesky solve.
    pub rank_deficient: bool,
}

/// Accumulated `R^T R` and `R^T Z` over the post-washout pairs.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    pairs: usize,
}

impl NormalEquations {
    /// Pairs column `n` of `states` with `targets[n]`, dropping the first
    /// `washout` pairs.
    pub fn accumulate(states: &StateMatrix, targets: &[State3], washout: usize) -> Result<Self> {
        Self::from_columns(states.as_columns().columns(0, states.n_samples()), targets, washout)
    }

    /// As [`NormalEquations::accumulate`] on an `N x T` column view.
    pub fn from_columns(cols: DMatrixView<f64>, targets: &[State3], washout: usize) -> Result<Self> {
        let t = cols.ncols();
        if t != targets.len() {
            return Err(Error::Dimension(format!("{t} states but {} targets", targets.len())));
        }
        if washout >= t {
            return Err(Error::Config(format!("washout {washout} leaves no pairs out of {t}")));
        }
        let n = cols.nrows();
        let mut gram = DMatrix::zeros(n, n);
        let mut cross = DMatrix::zeros(n, INPUT_DIM);
        let mut start = washout;
        while start < t {
            let end = (start + BLOCK).min(t);
            let block = cols.columns(start, end - start);
            let block_t = block.transpose();
            gram.gemm(1.0, &block, &block_t, 1.0);
            let z = DMatrix::from_fn(end - start, INPUT_DIM, |i, j| targets[start + i][j]);
            cross.gemm(1.0, &block, &z, 1.0);
            start = end;
        }
        Ok(Self {
            gram,
            cross,
            pairs: t - washout,
        })
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn solve(&self, lambda: f64) -> Result<Readout> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        let mut system = self.gram.clone();
        for i in 0..system.nrows() {
            system[(i, i)] += lambda;
        }
        if let Some(chol) = Cholesky::new(system.clone()) {
            let solution = chol.solve(&self.cross);
            if solution.iter().all(|v| v.is_finite()) {
                return Ok(Readout {
                    weights: solution.transpose(),
                    rank_deficient: false,
                });
            }
        }
        log::debug!("normal equations not positive definite; using least-norm eigen solve");
        least_norm(system, &self.cross).map(|weights| Readout {
            weights,
            rank_deficient: true,
        })
    }
}

fn least_norm(system: DMatrix<f64>, cross: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(system);
    let largest = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = EIGEN_CUTOFF * largest;
    let n = eig.eigenvalues.len();
    let mut solution = DMatrix::zeros(n, cross.ncols());
    for (k, &e) in eig.eigenvalues.iter().enumerate() {
        if e > cutoff {
            let u = eig.eigenvectors.column(k);
            let coeff = u.transpose() * cross / e;
            solution += u * coeff;
        }
    }
    if solution.iter().all(|v| v.is_finite()) {
        Ok(solution.transpose())
    } else {
        Err(Error::Fit("least-norm solution is not finite".into()))
    }
}

/// Fits the readout mapping column `n` of `states` to `targets[n]`.
pub fn ridge_fit(states: &StateMatrix, targets: &[State3], cfg: &RidgeConfig) -> Result<Readout> {
    cfg.validate()?;
    NormalEquations::accumulate(states, targets, cfg.washout)?.solve(cfg.lambda)
}
