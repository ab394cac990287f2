//! Local adaptive majorize-minimization (LAMM).
//!
//! Each iteration majorizes `Q` at the current iterate by the isotropic
//! quadratic
//!
//! ```text
//! F(β | φ, β⁰) = Q(β⁰) + ⟨∇Q(β⁰), β - β⁰⟩ + (φ/2)‖β - β⁰‖²
//! ```
//!
//! and minimizes `F + P` in closed form. The curvature `φ` is first relaxed
//! by `γ`, then inflated by `γ` until `F(β) ≥ Q(β)` holds at the candidate,
//! which makes `Q + P` non-increasing along accepted iterates.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::Smoothing;
use crate::objective::{gradient_from_residuals, mean_loss, Dataset, Design};
use crate::penalty::Penalty;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Smallest quadratic coefficient.
    pub phi0: f64,
    /// Inflation factor.
    pub gamma: f64,
    /// Stop once `‖β^k - β^{k-1}‖₂ ≤ epsilon`.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Inflations allowed within a single iteration.
    pub max_inflate: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            phi0: 0.01,
            gamma: 1.2,
            epsilon: 1e-4,
            max_iter: 5000,
            max_inflate: 200,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi0 > 0.0 && self.phi0.is_finite()) {
            return Err(Error::Config(format!("phi0 must be positive, got {}", self.phi0)));
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must exceed 1, got {}", self.gamma)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        Self { epsilon, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: Vec<f64>,
    /// Accepted iterations.
    pub iterations: usize,
    /// `Q + P` at the starting point followed by every accepted iterate.
    pub objective_trace: Vec<f64>,
    /// `F(β^k | φ_k, β^{k-1}) - Q(β^k)` at every accepted iterate.
    pub majorization_margins: Vec<f64>,
    pub converged: bool,
    pub final_phi: f64,
}

impl FitResult {
    /// Objective value at the returned coefficients.
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the starting value")
    }
}

/// `F(β | φ, anchor)` given `Q(anchor)` and `∇Q(anchor)`.
pub fn surrogate_value(
    beta: &[f64],
    anchor: &[f64],
    phi: f64,
    q_anchor: f64,
    grad_anchor: &[f64],
) -> f64 {
    let mut linear = 0.0;
    let mut quad = 0.0;
    for ((&b, &a), &g) in beta.iter().zip(anchor).zip(grad_anchor) {
        let d = b - a;
        linear += g * d;
        quad += d * d;
    }
    q_anchor + linear + 0.5 * phi * quad
}

/// Minimizes `Q(β) + P(β)` by LAMM, starting from `init` (zero if absent).
pub fn lamm_fit<D: Design>(
    data: &Dataset<D>,
    spec: &Smoothing,
    penalty: &Penalty,
    config: &SolverConfig,
    init: Option<&[f64]>,
) -> Result<FitResult> {
    config.validate()?;
    let d = data.dim();
    let n = data.n();
    penalty.validate(d)?;
    let mut beta = match init {
        Some(b) => {
            check_dim(d, b.len())?;
            b.to_vec()
        }
        None => vec![0.0; d],
    };

    let mut residual = vec![0.0; n];
    data.residuals_into(&beta, &mut residual);
    let mut q = mean_loss(&residual, spec);
    if !q.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut objective_trace = vec![q + penalty.value_unchecked(&beta)];
    let mut majorization_margins = Vec::new();

    let mut grad = vec![0.0; d];
    let mut scratch = vec![0.0; n];
    let mut candidate = vec![0.0; d];
    let mut cand_residual = vec![0.0; n];
    let mut phi = config.phi0;
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=config.max_iter {
        gradient_from_residuals(data, &residual, spec, &mut scratch, &mut grad);
        phi = (phi / config.gamma).max(config.phi0);
        let mut inflations = 0;
        let (q_cand, margin) = loop {
            penalty.prox_into(&beta, &grad, phi, &mut candidate);
            if candidate == beta {
                cand_residual.copy_from_slice(&residual);
                break (q, 0.0);
            }
            data.residuals_into(&candidate, &mut cand_residual);
            let q_cand = mean_loss(&cand_residual, spec);
            if !q_cand.is_finite() {
                return Err(Error::NonFinite { iteration: k });
            }
            let surrogate = surrogate_value(&candidate, &beta, phi, q, &grad);
            if surrogate >= q_cand {
                break (q_cand, surrogate - q_cand);
            }
            inflations += 1;
            if inflations > config.max_inflate {
                return Err(Error::InflationLimit {
                    iteration: k,
                    inflations,
                    phi,
                });
            }
            phi *= config.gamma;
        };

        let step = {
            let mut s = 0.0;
            for (c, b) in candidate.iter().zip(&beta) {
                s += (c - b) * (c - b);
            }
            s.sqrt()
        };
        std::mem::swap(&mut beta, &mut candidate);
        std::mem::swap(&mut residual, &mut cand_residual);
        q = q_cand;
        objective_trace.push(q + penalty.value_unchecked(&beta));
        majorization_margins.push(margin);
        iterations = k;
        if step <= config.epsilon {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        beta,
        iterations,
        objective_trace,
        majorization_margins,
        converged,
        final_phi: phi,
    })
}

/// Largest distance between `-∇Q(β)` and `∂P(β)` over coordinates (or
/// groups); zero exactly at a minimizer of `Q + P`.
pub fn kkt_residual<D: Design>(
    data: &Dataset<D>,
    beta: &[f64],
    spec: &Smoothing,
    penalty: &Penalty,
) -> Result<f64> {
    penalty.validate(beta.len())?;
    let g = crate::objective::gradient(data, beta, spec)?;
    Ok(penalty.subgradient_distance(beta, &g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;
    use crate::objective::DenseMatrix;

    #[test]
    fn surrogate_examples() {
        let anchor = [1.0, -2.0];
        assert_eq!(surrogate_value(&anchor, &anchor, 3.0, 0.7, &[0.4, 0.1]), 0.7);
        let beta = [1.0, -1.0];
        assert!((surrogate_value(&beta, &anchor, 2.0, 0.7, &[0.0, 0.0]) - 1.7).abs() < 1e-15);
    }

    #[test]
    fn intercept_only_symmetric_sample_converges_to_center() {
        let y = vec![-3.0, -1.0, 0.5, 2.0, 3.5, 5.0, 7.0];
        let center = 2.0;
        let sym: Vec<f64> = y.iter().flat_map(|v| [*v, 2.0 * center - v]).collect();
        let rows = vec![vec![1.0]; sym.len()];
        let data = Dataset::new(sym, DenseMatrix::from_rows(&rows).unwrap()).unwrap();
        let spec = Smoothing::new(0.5, 0.5, Kernel::Gaussian).unwrap();
        let config = SolverConfig::default().with_epsilon(1e-9);
        let fit = lamm_fit(&data, &spec, &Penalty::lasso(0.0, 1), &config, None).unwrap();
        assert!(fit.converged);
        assert!((fit.beta[0] - center).abs() < 1e-4, "{}", fit.beta[0]);
    }

    #[test]
    fn bad_config_is_rejected() {
        let data = Dataset::new(vec![1.0], DenseMatrix::from_rows(&[vec![1.0]]).unwrap()).unwrap();
        let spec = Smoothing::new(0.5, 0.5, Kernel::Gaussian).unwrap();
        let p = Penalty::lasso(0.0, 1);
        for cfg in [
            SolverConfig {
                gamma: 1.0,
                ..Default::default()
            },
            SolverConfig {
                phi0: 0.0,
                ..Default::default()
            },
            SolverConfig {
                epsilon: 0.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(lamm_fit(&data, &spec, &p, &cfg, None), Err(Error::Config(_))));
        }
        assert!(lamm_fit(&data, &spec, &p, &SolverConfig::default(), Some(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn inflation_cap_is_reported() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, 100.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 1e3 * i as f64).collect();
        let data = Dataset::new(y, DenseMatrix::from_rows(&rows).unwrap()).unwrap();
        let spec = Smoothing::new(0.5, 0.01, Kernel::Gaussian).unwrap();
        let cfg = SolverConfig {
            max_inflate: 2,
            ..Default::default()
        };
        let err = lamm_fit(&data, &spec, &Penalty::lasso(0.0, 2), &cfg, None).unwrap_err();
        assert!(matches!(err, Error::InflationLimit { iteration: 1, .. }), "{err}");
    }
}
