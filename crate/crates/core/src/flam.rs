//! Fused-lasso additive smoothed quantile regression.
//!
//! Each covariate contributes a mean-zero function `θ_j ∈ ℝⁿ` evaluated at
//! the training points, penalized by the total variation of `θ_j` along the
//! sorted order of `x_j`. Blocks are updated by cyclic block coordinate
//! descent. Each block subproblem is turned into a weighted lasso by writing
//! the sorted values as cumulative sums `θ_(k) = z_1 + … + z_k`, so that the
//! fused penalty becomes `λ Σ_{k≥2} |z_k|` with `z_1` free, and is solved by
//! [`lamm_fit`](crate::solver::lamm_fit).

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::Smoothing;
use crate::objective::{mean_loss, norm2, Dataset, Design};
use crate::penalty::Penalty;
use crate::solver::{lamm_fit, SolverConfig};

/// The operator `z ↦ Pᵀ T z`, where `T` is the lower-triangular matrix of
/// ones and `P` sorts a covariate in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedCumsum {
    order: Vec<usize>,
}

impl SortedCumsum {
    /// `order[k]` is the index of the k-th smallest value.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidInput("order is not a permutation".into()));
            }
        }
        Ok(Self { order })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Difference coordinates `z` with `Pᵀ T z = theta`.
    pub fn differences(&self, theta: &[f64]) -> Vec<f64> {
        let mut prev = 0.0;
        self.order
            .iter()
            .map(|&i| {
                let d = theta[i] - prev;
                prev = theta[i];
                d
            })
            .collect()
    }
}

impl Design for SortedCumsum {
    fn nrows(&self) -> usize {
        self.order.len()
    }

    fn ncols(&self) -> usize {
        self.order.len()
    }

    fn multiply(&self, z: &[f64], out: &mut [f64]) {
        let mut acc = 0.0;
        for (&i, &zk) in self.order.iter().zip(z) {
            acc += zk;
            out[i] = acc;
        }
    }

    fn transpose_multiply(&self, v: &[f64], out: &mut [f64]) {
        let mut acc = 0.0;
        for (k, &i) in self.order.iter().enumerate().rev() {
            acc += v[i];
            out[k] = acc;
        }
    }
}

/// Stable ascending sort order of a covariate column.
pub fn sort_order(x: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    order
}

/// Sort permutation of `x` and the cumulative-sum design built on it.
pub fn difference_design(x: &[f64]) -> (Vec<usize>, SortedCumsum) {
    let order = sort_order(x);
    let design = SortedCumsum {
        order: order.clone(),
    };
    (order, design)
}

/// `Σ_k |θ_(k) - θ_(k-1)|` along `order`.
pub fn fused_penalty(theta: &[f64], order: &[usize]) -> f64 {
    order
        .windows(2)
        .map(|w| (theta[w[1]] - theta[w[0]]).abs())
        .sum()
}

/// Solves `min_θ n⁻¹ Σ ℓ_{h,τ}(r_i - θ_i) + λ Σ_k |θ_(k) - θ_(k-1)|` with
/// the sort order of the covariate given, starting from `warm` (zero if
/// absent).
pub fn solve_fused_block(
    residual: &[f64],
    order: &[usize],
    lambda: f64,
    spec: &Smoothing,
    config: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = residual.len();
    check_dim(n, order.len())?;
    let design = SortedCumsum::new(order.to_vec())?;
    let init = match warm {
        Some(theta) => {
            check_dim(n, theta.len())?;
            design.differences(theta)
        }
        None => vec![0.0; n],
    };
    let data = Dataset::new(residual.to_vec(), design)?;
    let penalty = Penalty::lasso(lambda, n);
    let fit = lamm_fit(&data, spec, &penalty, config, Some(&init))?;
    let mut theta = vec![0.0; n];
    data.design().multiply(&fit.beta, &mut theta);
    Ok(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlamConfig {
    /// Inner solver settings. Its `epsilon` is replaced so that each inner
    /// step moves `θ_j` by at most `epsilon / p`.
    pub solver: SolverConfig,
    /// Stop once `|Δθ₀| + Σ_j ‖Δθ_j‖₂ ≤ epsilon` over a full cycle.
    pub epsilon: f64,
    pub max_cycles: usize,
}

impl Default for FlamConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            epsilon: 1e-3,
            max_cycles: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlamFit {
    pub theta0: f64,
    /// `theta[j][i] = θ_{ij}`, one mean-zero column per covariate.
    pub theta: Vec<Vec<f64>>,
    /// Training values of each covariate in ascending order.
    pub sorted_x: Vec<Vec<f64>>,
    /// Fitted values of each component along `sorted_x`.
    pub sorted_theta: Vec<Vec<f64>>,
    pub lambda: f64,
    pub spec: Smoothing,
    pub cycles: usize,
    /// Full objective before the first cycle and after each cycle.
    pub objective_trace: Vec<f64>,
}

impl FlamFit {
    /// In-sample fitted values `θ₀ + Σ_j θ_{ij}`.
    pub fn fitted(&self) -> Vec<f64> {
        let n = self.theta.first().map_or(0, Vec::len);
        let mut out = vec![self.theta0; n];
        for col in &self.theta {
            for (o, t) in out.iter_mut().zip(col) {
                *o += t;
            }
        }
        out
    }
}

/// `n⁻¹ Σ ℓ(y_i - θ₀ - Σ_j θ_{ij}) + λ Σ_j ‖D P_j θ_j‖₁`.
pub fn flam_objective(
    y: &[f64],
    theta0: f64,
    theta: &[Vec<f64>],
    orders: &[Vec<usize>],
    lambda: f64,
    spec: &Smoothing,
) -> f64 {
    let mut r: Vec<f64> = y.iter().map(|v| v - theta0).collect();
    for col in theta {
        for (ri, t) in r.iter_mut().zip(col) {
            *ri -= t;
        }
    }
    let penalty: f64 = theta
        .iter()
        .zip(orders)
        .map(|(t, o)| fused_penalty(t, o))
        .sum();
    mean_loss(&r, spec) + lambda * penalty
}

/// Fits the additive model by cyclic block coordinate descent. `columns[j]`
/// holds the n values of covariate j (no intercept column).
pub fn fit_flam(
    y: &[f64],
    columns: &[Vec<f64>],
    lambda: f64,
    spec: &Smoothing,
    config: &FlamConfig,
) -> Result<FlamFit> {
    let n = y.len();
    let p = columns.len();
    if n < 2 {
        return Err(Error::InvalidInput("additive model needs at least 2 observations".into()));
    }
    if p == 0 {
        return Err(Error::InvalidInput("additive model needs at least one covariate".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    for col in columns {
        check_dim(n, col.len())?;
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariates must be finite".into()));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("response must be finite".into()));
    }
    // ‖Δθ_j‖₂ ≤ ‖T‖₂ ‖Δz‖₂, so this keeps each inner step within ε/p in θ
    let inner = config
        .solver
        .with_epsilon(config.epsilon / (p as f64 * cumsum_norm(n)));

    let orders: Vec<Vec<usize>> = columns.iter().map(|c| sort_order(c)).collect();
    let mut theta0 = 0.0;
    let mut theta = vec![vec![0.0; n]; p];
    // fitted = θ₀ + Σ_j θ_j
    let mut fitted = vec![0.0; n];
    let mut objective_trace = vec![flam_objective(y, theta0, &theta, &orders, lambda, spec)];
    let mut residual = vec![0.0; n];
    let mut cycles = 0;
    let mut change = f64::INFINITY;

    while change > config.epsilon {
        if cycles == config.max_cycles {
            return Err(Error::CycleLimit {
                max_cycles: config.max_cycles,
                change,
            });
        }
        cycles += 1;
        let theta0_start = theta0;
        change = 0.0;
        for j in 0..p {
            for i in 0..n {
                residual[i] = y[i] - (fitted[i] - theta[j][i]);
            }
            let mut block = solve_fused_block(&residual, &orders[j], lambda, spec, &inner, Some(&theta[j]))?;
            let mean = block.iter().sum::<f64>() / n as f64;
            theta0 += mean;
            for b in block.iter_mut() {
                *b -= mean;
            }
            let diff: Vec<f64> = block.iter().zip(&theta[j]).map(|(a, b)| a - b).collect();
            change += norm2(&diff);
            theta[j] = block;
            refresh_fitted(theta0, &theta, &mut fitted);
        }
        change += (theta0 - theta0_start).abs();
        objective_trace.push(flam_objective(y, theta0, &theta, &orders, lambda, spec));
    }

    let sorted_x = columns
        .iter()
        .zip(&orders)
        .map(|(c, o)| o.iter().map(|&i| c[i]).collect())
        .collect();
    let sorted_theta = theta
        .iter()
        .zip(&orders)
        .map(|(t, o)| o.iter().map(|&i| t[i]).collect())
        .collect();
    Ok(FlamFit {
        theta0,
        theta,
        sorted_x,
        sorted_theta,
        lambda,
        spec: *spec,
        cycles,
        objective_trace,
    })
}

/// Spectral norm of the n×n lower-triangular matrix of ones.
fn cumsum_norm(n: usize) -> f64 {
    let m = n as f64;
    0.5 / (std::f64::consts::PI / (2.0 * (2.0 * m + 1.0))).sin()
}

fn refresh_fitted(theta0: f64, theta: &[Vec<f64>], fitted: &mut [f64]) {
    fitted.fill(theta0);
    for col in theta {
        for (f, t) in fitted.iter_mut().zip(col) {
            *f += t;
        }
    }
}

/// `θ₀ + Σ_j f_j(x_j)` where `f_j` takes the fitted value at the largest
/// training point not exceeding `x_j` (the smallest training point when
/// `x_j` lies below all of them).
pub fn predict_flam(fit: &FlamFit, x: &[f64]) -> Result<f64> {
    check_dim(fit.sorted_x.len(), x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("prediction input must be finite".into()));
    }
    let mut value = fit.theta0;
    for ((xs, ts), &xj) in fit.sorted_x.iter().zip(&fit.sorted_theta).zip(x) {
        let k = xs.partition_point(|&v| v <= xj).saturating_sub(1);
        value += ts[k];
    }
    Ok(value)
}
