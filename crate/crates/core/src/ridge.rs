//! Kernel ridge regression in dual form.
//!
//! A fitted model predicts `f(x) = k_x^T alpha` with `k_x[i] = k(x, x_i) / N`
//! and `alpha = (cI + K)^{-1} y` (regularized) or `alpha = K^+ y` (min-norm).

use std::sync::Arc;

use nalgebra::{Cholesky, Dyn};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::kernel::{gram_matrix, gram_square, KernelSpec};
use crate::linalg::{pinv, rank, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    /// `(cI + K)^{-1} y`; with `c = 0` the Gram matrix must be invertible.
    #[default]
    Regularized,
    /// Pseudoinverse solution `K^+ y`; the regularization constant is ignored.
    MinNorm,
}

#[derive(Debug, Clone)]
enum Factor {
    Cholesky(Cholesky<f64, Dyn>),
    /// Explicit inverse or pseudoinverse.
    Dense(Matrix),
}

/// A factorized kernel system for one training set. Fitting many label
/// vectors against the same inputs reuses the factorization.
#[derive(Debug, Clone)]
pub struct RidgeSolver {
    inputs: Arc<Matrix>,
    kernel: KernelSpec,
    scale_count: usize,
    reg: f64,
    mode: SolveMode,
    gram: Matrix,
    factor: Factor,
    rank: usize,
}

impl RidgeSolver {
    pub fn new(
        inputs: Arc<Matrix>,
        kernel: KernelSpec,
        reg: f64,
        scale_count: usize,
        mode: SolveMode,
    ) -> Result<Self> {
        kernel.validate()?;
        if !(reg.is_finite() && reg >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "regularization must be finite and nonnegative, got {reg}"
            )));
        }
        let gram = gram_square(&kernel, &inputs, scale_count)?;
        let n = gram.nrows();
        let (factor, rank) = match mode {
            SolveMode::MinNorm => {
                let (p, r) = pinv(&gram);
                (Factor::Dense(p), r)
            }
            SolveMode::Regularized => {
                let system = &gram + Matrix::identity(n, n) * reg;
                let gram_rank = rank(&gram);
                if reg == 0.0 && gram_rank < n {
                    return Err(Error::SingularSystem { c: reg, rank: gram_rank, size: n });
                }
                match Cholesky::new(system.clone()) {
                    Some(ch) => (Factor::Cholesky(ch), gram_rank),
                    None => {
                        // symmetric factorization failed; accept only a numerically invertible system
                        let (p, r) = pinv(&system);
                        if r < n {
                            return Err(Error::SingularSystem { c: reg, rank: r, size: n });
                        }
                        (Factor::Dense(p), gram_rank)
                    }
                }
            }
        };
        Ok(RidgeSolver {
            inputs,
            kernel,
            scale_count,
            reg,
            mode,
            gram,
            factor,
            rank,
        })
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn scale_count(&self) -> usize {
        self.scale_count
    }

    pub fn mode(&self) -> SolveMode {
        self.mode
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    /// Numerical rank of the (unregularized) Gram matrix.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Dual weights for the given labels.
    pub fn solve(&self, labels: &Vector) -> Result<Vector> {
        check_dim("RidgeSolver::solve (labels)", self.gram.nrows(), labels.len())?;
        Ok(match &self.factor {
            Factor::Cholesky(ch) => ch.solve(labels),
            Factor::Dense(m) => m * labels,
        })
    }

    /// The explicit solve operator: `(cI + K)^{-1}` or `K^+`.
    pub fn solve_operator(&self) -> Matrix {
        match &self.factor {
            Factor::Cholesky(ch) => ch.inverse(),
            Factor::Dense(m) => m.clone(),
        }
    }

    pub fn fit(&self, labels: &Vector) -> Result<RidgeModel> {
        let dual_weights = self.solve(labels)?;
        Ok(RidgeModel {
            train_inputs: Arc::clone(&self.inputs),
            dual_weights,
            kernel: self.kernel,
            scale_count: self.scale_count,
            reg: self.reg,
            mode: self.mode,
            rank: self.rank,
        })
    }
}

/// A fitted kernel ridge model.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub train_inputs: Arc<Matrix>,
    pub dual_weights: Vector,
    pub kernel: KernelSpec,
    pub scale_count: usize,
    pub reg: f64,
    pub mode: SolveMode,
    /// Numerical rank of the training Gram matrix.
    pub rank: usize,
}

impl RidgeModel {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.dual_weights.len()
    }

    pub fn predict(&self, query: &Matrix) -> Result<Vector> {
        check_dim("predict (feature dimension)", self.train_inputs.ncols(), query.ncols())?;
        let cross = gram_matrix(&self.kernel, query, &self.train_inputs, self.scale_count)?;
        Ok(cross * &self.dual_weights)
    }

    /// Same model with replaced dual weights.
    pub fn with_dual_weights(&self, dual_weights: Vector) -> Result<Self> {
        check_dim("RidgeModel::with_dual_weights", self.dual_weights.len(), dual_weights.len())?;
        Ok(RidgeModel {
            dual_weights,
            ..self.clone()
        })
    }
}

fn labels_for<'a>(data: &'a Dataset, labels_override: Option<&'a Vector>) -> Result<&'a Vector> {
    match labels_override {
        Some(y) => {
            check_dim("labels_override", data.len(), y.len())?;
            Ok(y)
        }
        None => Ok(data.labels()),
    }
}

/// Regularized fit `alpha = (cI + K)^{-1} y`. With `c = 0` and a singular
/// Gram matrix this fails with [`Error::SingularSystem`].
pub fn fit_krr(
    data: &Dataset,
    labels_override: Option<&Vector>,
    spec: &KernelSpec,
    c: f64,
    scale_count: usize,
) -> Result<RidgeModel> {
    let y = labels_for(data, labels_override)?;
    RidgeSolver::new(data.shared_inputs(), *spec, c, scale_count, SolveMode::Regularized)?.fit(y)
}

/// Minimum-norm interpolating fit `alpha = K^+ y`.
pub fn fit_krr_minnorm(
    data: &Dataset,
    labels_override: Option<&Vector>,
    spec: &KernelSpec,
    scale_count: usize,
) -> Result<RidgeModel> {
    let y = labels_for(data, labels_override)?;
    RidgeSolver::new(data.shared_inputs(), *spec, 0.0, scale_count, SolveMode::MinNorm)?.fit(y)
}

pub fn predict(model: &RidgeModel, query: &Matrix) -> Result<Vector> {
    model.predict(query)
}
