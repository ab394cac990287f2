//! Check loss, smoothing kernels and the convolution-smoothed check loss.
//!
//! Every kernel `K` is a symmetric density. Writing the check loss as
//! `ρ_τ(v) = |v|/2 + (τ - 1/2) v`, the smoothed loss becomes
//!
//! ```text
//! ℓ_{h,τ}(u) = (τ - 1/2) u + (h/2) · g(u/h),   g(t) = E|t + Z|,  Z ~ K
//! ```
//!
//! so each kernel only has to provide its density, its distribution function
//! and the closed form of `g`. The derivative is `ℓ'(u) = K̄(u/h) - (1 - τ)`.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};

/// Smoothing kernel used in the convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Uniform,
    Gaussian,
    Logistic,
    Epanechnikov,
    Triangular,
}

impl Kernel {
    pub const ALL: [Kernel; 5] = [
        Kernel::Uniform,
        Kernel::Gaussian,
        Kernel::Logistic,
        Kernel::Epanechnikov,
        Kernel::Triangular,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Uniform => "uniform",
            Kernel::Gaussian => "gaussian",
            Kernel::Logistic => "logistic",
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Triangular => "triangular",
        }
    }

    /// Half-width of the support, `None` for kernels with unbounded support.
    pub fn support_radius(self) -> Option<f64> {
        match self {
            Kernel::Gaussian | Kernel::Logistic => None,
            _ => Some(1.0),
        }
    }

    /// Density `K(t)`.
    pub fn density(self, t: f64) -> f64 {
        let a = t.abs();
        match self {
            Kernel::Uniform => {
                if a <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            Kernel::Gaussian => (-0.5 * t * t).exp() / (2.0 * PI).sqrt(),
            Kernel::Logistic => {
                let e = (-a).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            Kernel::Epanechnikov => {
                if a <= 1.0 {
                    0.75 * (1.0 - t * t)
                } else {
                    0.0
                }
            }
            Kernel::Triangular => {
                if a <= 1.0 {
                    1.0 - a
                } else {
                    0.0
                }
            }
        }
    }

    /// Distribution function `K̄(t) = ∫_{-∞}^t K`.
    pub fn cdf(self, t: f64) -> f64 {
        match self {
            Kernel::Gaussian => 0.5 * erfc(-t * FRAC_1_SQRT_2),
            Kernel::Logistic => {
                if t >= 0.0 {
                    1.0 / (1.0 + (-t).exp())
                } else {
                    let e = t.exp();
                    e / (1.0 + e)
                }
            }
            _ => {
                if t <= -1.0 {
                    0.0
                } else if t >= 1.0 {
                    1.0
                } else {
                    match self {
                        Kernel::Uniform => 0.5 * (1.0 + t),
                        Kernel::Epanechnikov => 0.5 + 0.75 * t - 0.25 * t * t * t,
                        Kernel::Triangular => 0.5 + t - 0.5 * t * t.abs(),
                        _ => unreachable!(),
                    }
                }
            }
        }
    }

    /// `g(t) = E|t + Z|` for `Z` drawn from this kernel.
    pub fn abs_mean(self, t: f64) -> f64 {
        match self {
            Kernel::Gaussian => {
                let phi = (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
                t * erf(t * FRAC_1_SQRT_2) + 2.0 * phi
            }
            // 2·log(1 + e^t) - t, written symmetrically in |t|
            Kernel::Logistic => {
                let a = t.abs();
                a + 2.0 * (-a).exp().ln_1p()
            }
            _ => {
                let a = t.abs();
                if a >= 1.0 {
                    return a;
                }
                let t2 = t * t;
                match self {
                    Kernel::Uniform => 0.5 * (t2 + 1.0),
                    Kernel::Epanechnikov => 0.375 + 0.75 * t2 - 0.125 * t2 * t2,
                    Kernel::Triangular => t2 - t2 * a / 3.0 + 1.0 / 3.0,
                    _ => unreachable!(),
                }
            }
        }
    }

    /// `E|Z|`, so that `ℓ_{h,τ}(0) = h·E|Z|/2`.
    pub fn mean_abs(self) -> f64 {
        match self {
            Kernel::Uniform => 0.5,
            Kernel::Gaussian => (2.0 / PI).sqrt(),
            Kernel::Logistic => 2.0 * LN_2,
            Kernel::Epanechnikov => 0.375,
            Kernel::Triangular => 1.0 / 3.0,
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Kernel::Uniform),
            "gaussian" | "normal" => Ok(Kernel::Gaussian),
            "logistic" => Ok(Kernel::Logistic),
            "epanechnikov" | "parabolic" => Ok(Kernel::Epanechnikov),
            "triangular" => Ok(Kernel::Triangular),
            other => Err(Error::InvalidInput(format!(
                "unknown kernel `{other}` (expected one of uniform, gaussian, logistic, epanechnikov, triangular)"
            ))),
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("quantile level must lie in (0, 1), got {tau}")))
    }
}

/// Quantile check loss `ρ_τ(u) = u (τ - 1{u < 0})`.
pub fn check_loss(u: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(rho(u, tau))
}

#[inline]
pub(crate) fn rho(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// Quantile level, bandwidth and kernel of a smoothed check loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    tau: f64,
    bandwidth: f64,
    kernel: Kernel,
}

impl Smoothing {
    pub fn new(tau: f64, bandwidth: f64, kernel: Kernel) -> Result<Self> {
        check_tau(tau)?;
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Domain(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self {
            tau,
            bandwidth,
            kernel,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    /// Unsmoothed check loss at this quantile level.
    #[inline]
    pub fn check_loss(&self, u: f64) -> f64 {
        rho(u, self.tau)
    }

    /// Smoothed loss `ℓ_{h,τ}(u)`.
    #[inline]
    pub fn loss(&self, u: f64) -> f64 {
        let h = self.bandwidth;
        (self.tau - 0.5) * u + 0.5 * h * self.kernel.abs_mean(u / h)
    }

    /// `ℓ'_{h,τ}(u) = K̄(u/h) - (1 - τ)`.
    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        self.kernel.cdf(u / self.bandwidth) - (1.0 - self.tau)
    }
}

/// Bandwidth rule `max{0.05, sqrt(τ(1-τ)) (log p / n)^{1/4}}`.
pub fn default_bandwidth(n: usize, p: usize, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if n < 2 || p < 1 {
        return Err(Error::InvalidInput(format!(
            "bandwidth rule needs n >= 2 and p >= 1, got n = {n}, p = {p}"
        )));
    }
    let rate = ((p as f64).ln() / n as f64).powf(0.25);
    Ok(((tau * (1.0 - tau)).sqrt() * rate).max(0.05))
}
