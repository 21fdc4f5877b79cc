//! Federated kernel ridge regression laboratory.
//!
//! Agents hold private datasets and their own kernels, and exchange fitted
//! models (never data) through knowledge-distillation protocols: alternating
//! (AKD), averaged (AvgKD), parallel (PKD) and ensembled (EKD). Each
//! protocol runs as a round-by-round simulation and also has an algebraic
//! counterpart, either a block-matrix closed form or an expression in
//! oblique projections and contractions of the block-diagonal kernel
//! operator. The two are checked against each other.
//!
//! Module map:
//! - [`kernel`], [`dataset`], [`ridge`]: kernels, Gram matrices, KRR fits.
//! - [`spectral`]: block kernel system, eigendecomposition, projectors.
//! - [`protocols`]: simulations, closed forms, optimal references.
//! - [`datagen`]: synthetic regression data and heterogeneous splits.
//! - [`harness`]: experiment configs, metrics, CSV and SVG output.

pub mod datagen;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod protocols;
pub mod ridge;
pub mod spectral;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use kernel::{eval_kernel, gram_matrix, KernelSpec};
pub use linalg::{Matrix, Vector};
pub use ridge::{fit_krr, fit_krr_minnorm, predict, RidgeModel, RidgeSolver, SolveMode};
