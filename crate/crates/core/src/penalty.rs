//! Convex penalties and their closed-form proximal updates.
//!
//! Coordinate 0 is the intercept and is never penalized.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::objective::norm2;

/// `sign(a) · max(|a| - b, 0)`.
#[inline]
pub fn soft_threshold(a: f64, b: f64) -> f64 {
    debug_assert!(b >= 0.0);
    if a > b {
        a - b
    } else if a < -b {
        a + b
    } else {
        0.0
    }
}

/// Contiguous, disjoint groups covering coordinates `1..dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStructure {
    sizes: Vec<usize>,
    weights: Vec<f64>,
}

impl GroupStructure {
    /// Groups of the given sizes with weights `√p_g`.
    pub fn from_sizes(sizes: Vec<usize>) -> Result<Self> {
        let weights = sizes.iter().map(|&s| (s as f64).sqrt()).collect();
        Self::with_weights(sizes, weights)
    }

    pub fn with_weights(sizes: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidInput("group structure needs at least one group".into()));
        }
        check_dim(sizes.len(), weights.len())?;
        if sizes.contains(&0) {
            return Err(Error::InvalidInput("groups must be non-empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput(format!("group weights must be positive, got {w}")));
        }
        Ok(Self { sizes, weights })
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Coefficient dimension covered, intercept included.
    pub fn dim(&self) -> usize {
        1 + self.sizes.iter().sum::<usize>()
    }

    /// Coordinate ranges of the groups in order.
    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.sizes.iter().scan(1usize, |start, &s| {
            let r = *start..*start + s;
            *start += s;
            Some(r)
        })
    }

    fn check(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::InvalidInput(format!(
                "groups cover {} coefficients but the model has {dim}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Group shrinkage norm used by the sparse group lasso update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparseGroupProx {
    /// Exact proximal map: shrink by the norm of the soft-thresholded block.
    #[default]
    Exact,
    /// Shrink by the norm of the un-thresholded block. Kept for comparison
    /// with implementations that use this form; not an exact minimizer.
    UnthresholdedNorm,
}

/// A penalty with its regularization values fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Penalty {
    /// `Σ_j λ_j |β_j|` with `λ_0 = 0`.
    WeightedLasso { weights: Vec<f64> },
    /// `λα‖β‖₁ + λ(1-α)‖β‖₂²`.
    ElasticNet { lambda: f64, alpha: f64 },
    /// `λ Σ_g w_g ‖β_g‖₂`.
    GroupLasso { lambda: f64, groups: GroupStructure },
    /// `λ‖β‖₁ + λ Σ_g w_g ‖β_g‖₂`.
    SparseGroupLasso {
        lambda: f64,
        groups: GroupStructure,
        #[serde(default)]
        prox: SparseGroupProx,
    },
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "regularization must be finite and non-negative, got {lambda}"
        )))
    }
}

impl Penalty {
    /// Lasso with a common `λ` on every non-intercept coordinate.
    pub fn lasso(lambda: f64, dim: usize) -> Self {
        let mut weights = vec![lambda; dim];
        if let Some(w) = weights.first_mut() {
            *w = 0.0;
        }
        Penalty::WeightedLasso { weights }
    }

    /// Checks parameters against a coefficient dimension.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Penalty::WeightedLasso { weights } => {
                check_dim(dim, weights.len())?;
                if weights[0] != 0.0 {
                    return Err(Error::InvalidInput("the intercept weight must be 0".into()));
                }
                weights.iter().try_for_each(|&w| check_lambda(w))
            }
            Penalty::ElasticNet { lambda, alpha } => {
                check_lambda(*lambda)?;
                if !(0.0..=1.0).contains(alpha) {
                    return Err(Error::InvalidInput(format!("alpha must lie in [0, 1], got {alpha}")));
                }
                Ok(())
            }
            Penalty::GroupLasso { lambda, groups }
            | Penalty::SparseGroupLasso { lambda, groups, .. } => {
                check_lambda(*lambda)?;
                groups.check(dim)
            }
        }
    }

    /// `P(β)`.
    pub fn value(&self, beta: &[f64]) -> Result<f64> {
        self.validate(beta.len())?;
        Ok(self.value_unchecked(beta))
    }

    pub(crate) fn value_unchecked(&self, beta: &[f64]) -> f64 {
        let rest = &beta[1..];
        match self {
            Penalty::WeightedLasso { weights } => rest
                .iter()
                .zip(&weights[1..])
                .map(|(b, w)| w * b.abs())
                .sum(),
            Penalty::ElasticNet { lambda, alpha } => {
                let l1: f64 = rest.iter().map(|b| b.abs()).sum();
                let l2: f64 = rest.iter().map(|b| b * b).sum();
                lambda * alpha * l1 + lambda * (1.0 - alpha) * l2
            }
            Penalty::GroupLasso { lambda, groups } => lambda * group_norm_sum(beta, groups),
            Penalty::SparseGroupLasso { lambda, groups, .. } => {
                let l1: f64 = rest.iter().map(|b| b.abs()).sum();
                lambda * (l1 + group_norm_sum(beta, groups))
            }
        }
    }

    /// Writes `argmin_β φ/2 ‖β - u‖² + P(β)` with `u = v - grad/φ` into `out`;
    /// the intercept takes the plain gradient step.
    pub(crate) fn prox_into(&self, v: &[f64], grad: &[f64], phi: f64, out: &mut [f64]) {
        for ((o, &vj), &gj) in out.iter_mut().zip(v).zip(grad) {
            *o = vj - gj / phi;
        }
        match self {
            Penalty::WeightedLasso { weights } => {
                for (o, &w) in out[1..].iter_mut().zip(&weights[1..]) {
                    *o = soft_threshold(*o, w / phi);
                }
            }
            Penalty::ElasticNet { lambda, alpha } => {
                let threshold = lambda * alpha / phi;
                let scale = 1.0 / (1.0 + 2.0 * lambda * (1.0 - alpha) / phi);
                for o in out[1..].iter_mut() {
                    *o = soft_threshold(*o, threshold) * scale;
                }
            }
            Penalty::GroupLasso { lambda, groups } => {
                for (range, &w) in groups.ranges().zip(groups.weights()) {
                    shrink_block(&mut out[range], lambda * w / phi);
                }
            }
            Penalty::SparseGroupLasso {
                lambda,
                groups,
                prox,
            } => {
                let threshold = lambda / phi;
                for (range, &w) in groups.ranges().zip(groups.weights()) {
                    let block = &mut out[range];
                    let raw_norm = norm2(block);
                    for b in block.iter_mut() {
                        *b = soft_threshold(*b, threshold);
                    }
                    let norm = match prox {
                        SparseGroupProx::Exact => norm2(block),
                        SparseGroupProx::UnthresholdedNorm => raw_norm,
                    };
                    scale_block(block, norm, lambda * w / phi);
                }
            }
        }
    }

    /// Largest distance, over coordinates and groups, between `-grad` and
    /// the subdifferential of `P` at `beta`; the intercept contributes `|grad_0|`.
    pub(crate) fn subgradient_distance(&self, beta: &[f64], grad: &[f64]) -> f64 {
        let mut worst = grad[0].abs();
        match self {
            Penalty::WeightedLasso { weights } => {
                for j in 1..beta.len() {
                    worst = worst.max(l1_distance(beta[j], grad[j], weights[j]));
                }
            }
            Penalty::ElasticNet { lambda, alpha } => {
                for j in 1..beta.len() {
                    let smooth = grad[j] + 2.0 * lambda * (1.0 - alpha) * beta[j];
                    worst = worst.max(l1_distance(beta[j], smooth, lambda * alpha));
                }
            }
            Penalty::GroupLasso { lambda, groups } => {
                for (range, &w) in groups.ranges().zip(groups.weights()) {
                    let b = &beta[range.clone()];
                    let g = &grad[range];
                    let radius = lambda * w;
                    let nb = norm2(b);
                    let d = if nb > 0.0 {
                        b.iter()
                            .zip(g)
                            .map(|(bj, gj)| (gj + radius * bj / nb).powi(2))
                            .sum::<f64>()
                            .sqrt()
                    } else {
                        (norm2(g) - radius).max(0.0)
                    };
                    worst = worst.max(d);
                }
            }
            Penalty::SparseGroupLasso { lambda, groups, .. } => {
                for (range, &w) in groups.ranges().zip(groups.weights()) {
                    let b = &beta[range.clone()];
                    let g = &grad[range];
                    let radius = lambda * w;
                    let nb = norm2(b);
                    let d = if nb > 0.0 {
                        b.iter()
                            .zip(g)
                            .map(|(&bj, &gj)| {
                                if bj != 0.0 {
                                    (gj + lambda * bj.signum() + radius * bj / nb).powi(2)
                                } else {
                                    (gj.abs() - lambda).max(0.0).powi(2)
                                }
                            })
                            .sum::<f64>()
                            .sqrt()
                    } else {
                        let residual: f64 = g
                            .iter()
                            .map(|&gj| soft_threshold(gj, *lambda).powi(2))
                            .sum::<f64>()
                            .sqrt();
                        (residual - radius).max(0.0)
                    };
                    worst = worst.max(d);
                }
            }
        }
        worst
    }
}

fn group_norm_sum(beta: &[f64], groups: &GroupStructure) -> f64 {
    groups
        .ranges()
        .zip(groups.weights())
        .map(|(r, w)| w * norm2(&beta[r]))
        .sum()
}

/// Distance from `-g` to `λ ∂|b|`.
fn l1_distance(b: f64, g: f64, lambda: f64) -> f64 {
    if b != 0.0 {
        (g + lambda * b.signum()).abs()
    } else {
        (g.abs() - lambda).max(0.0)
    }
}

fn shrink_block(block: &mut [f64], radius: f64) {
    let norm = norm2(block);
    scale_block(block, norm, radius);
}

/// Multiplies by `(1 - radius/norm)₊`; a zero norm leaves the block at zero.
fn scale_block(block: &mut [f64], norm: f64, radius: f64) {
    let factor = if norm > 0.0 {
        (1.0 - radius / norm).max(0.0)
    } else {
        0.0
    };
    for b in block.iter_mut() {
        *b *= factor;
    }
}

/// One proximal update: minimizer of `φ/2 ‖β - (v - grad/φ)‖² + P(β)`.
pub fn prox_step(v: &[f64], grad: &[f64], phi: f64, penalty: &Penalty) -> Result<Vec<f64>> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::Domain(format!("phi must be positive, got {phi}")));
    }
    check_dim(v.len(), grad.len())?;
    penalty.validate(v.len())?;
    let mut out = vec![0.0; v.len()];
    penalty.prox_into(v, grad, phi, &mut out);
    Ok(out)
}
