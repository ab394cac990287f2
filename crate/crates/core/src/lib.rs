//! Penalized convolution-smoothed quantile regression.
//!
//! The check loss is replaced by its convolution with a scaled kernel, which
//! makes the empirical loss smooth and convex. Penalized fits are computed by
//! local adaptive majorize-minimization with closed-form proximal updates for
//! the weighted lasso, elastic net, group lasso and sparse group lasso. On top
//! of the solver sit warm-started regularization paths, k-fold
//! cross-validation, a fused-lasso additive model fitted by block coordinate
//! descent, and generators for heteroscedastic simulation designs.

pub mod error;
pub mod flam;
pub mod kernel;
pub mod objective;
pub mod penalty;
pub mod simulation;
pub mod solver;
pub mod tuning;

pub use error::{Error, Result};
pub use kernel::{check_loss, default_bandwidth, Kernel, Smoothing};
pub use objective::{check_loss_total, gradient, loss_value, Dataset, DenseMatrix, Design};
pub use penalty::{prox_step, soft_threshold, GroupStructure, Penalty, SparseGroupProx};
pub use solver::{kkt_residual, lamm_fit, surrogate_value, FitResult, SolverConfig};
pub use tuning::{cross_validate, fit_path, lambda_max, CvResult, LambdaPath, PenaltyFamily};
