//! Synthetic heteroscedastic designs and the evaluation metrics used to
//! score penalized fits on them.
//!
//! Data follow `y_i = x_iᵀβ* + (0.5·x_{i,p+1} + 1)(ε_i - F_ε⁻¹(τ))`, where
//! `x_i = (1, x̃_iᵀ)ᵀ`, `x̃_i ~ N_p(0, Σ)` and `x_{i,p+1}` is the last
//! covariate, so the conditional τ-quantile of `y` is exactly `x_iᵀβ*`.
//!
//! All randomness comes from ChaCha8. Replication `r` of a run with master
//! seed `s` uses ChaCha8 seeded with `s` on stream `r`: its first output is
//! the fold seed, the rest generates the data.

use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc_inv;

use crate::error::{check_dim, Error, Result};
use crate::kernel::{default_bandwidth, Kernel, Smoothing};
use crate::objective::{pairwise_sum, DenseMatrix, Dataset};
use crate::penalty::GroupStructure;
use crate::solver::SolverConfig;
use crate::tuning::{
    cross_validate, lambda_max, LambdaPath, PenaltyFamily, DEFAULT_FOLDS, DEFAULT_MIN_RATIO,
    DEFAULT_PATH_LENGTH,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Correlation {
    /// `Σ_jk = ρ^{|j-k|}`.
    Ar1 { rho: f64 },
    /// Block-diagonal with exchangeable blocks (unit diagonal, `rho`
    /// off-diagonal) of sizes 5, 5, 10, 10, 10 and ten blocks of `(p-40)/10`.
    BlockExchangeable { rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientPattern {
    /// Intercept 4; ±(1, …, 1.8) on the even covariates 2..20.
    Sparse,
    /// Intercept 4; 0.8 on coefficients 2..100.
    Dense,
    /// Intercept 4; blocks 2·𝟏₅, 1.6·𝟏₅, -2·𝟏₁₀, 𝟏₁₀, 0.6·𝟏₁₀, then zeros.
    Grouped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Noise {
    Normal { variance: f64 },
    StudentT { df: f64 },
}

impl Noise {
    pub fn quantile(&self, tau: f64) -> Result<f64> {
        match *self {
            Noise::Normal { variance } => Ok(variance.sqrt() * normal_quantile(tau)?),
            Noise::StudentT { df } => t_quantile(tau, df),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, chi: Option<&Gamma<f64>>) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        match *self {
            Noise::Normal { variance } => variance.sqrt() * z,
            Noise::StudentT { .. } => {
                let g = chi.expect("gamma sampler for t noise").sample(rng);
                z / g.sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub p: usize,
    pub correlation: Correlation,
    pub pattern: CoefficientPattern,
    pub noise: Noise,
    pub tau: f64,
    pub seed: u64,
}

pub const NORMAL_NOISE: Noise = Noise::Normal { variance: 2.0 };
pub const HEAVY_TAILED_NOISE: Noise = Noise::StudentT { df: 1.5 };

impl SimDesign {
    /// Sparse coefficients with AR(1) correlation 0.7.
    pub fn sparse(n: usize, p: usize, noise: Noise, tau: f64, seed: u64) -> Self {
        Self {
            n,
            p,
            correlation: Correlation::Ar1 { rho: 0.7 },
            pattern: CoefficientPattern::Sparse,
            noise,
            tau,
            seed,
        }
    }

    /// Dense coefficients with AR(1) correlation 0.7.
    pub fn dense(n: usize, p: usize, noise: Noise, tau: f64, seed: u64) -> Self {
        Self {
            pattern: CoefficientPattern::Dense,
            ..Self::sparse(n, p, noise, tau, seed)
        }
    }

    /// Sparse groups with exchangeable 0.6 correlation within blocks.
    pub fn grouped(n: usize, p: usize, noise: Noise, tau: f64, seed: u64) -> Self {
        Self {
            n,
            p,
            correlation: Correlation::BlockExchangeable { rho: 0.6 },
            pattern: CoefficientPattern::Grouped,
            noise,
            tau,
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("need n >= 2, got {}", self.n)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Domain(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        let uses_blocks = matches!(self.correlation, Correlation::BlockExchangeable { .. })
            || self.pattern == CoefficientPattern::Grouped;
        if uses_blocks && (self.p <= 40 || self.p % 10 != 0) {
            return Err(Error::Config(format!(
                "grouped designs need p > 40 with p divisible by 10, got {}",
                self.p
            )));
        }
        let min_p = match self.pattern {
            CoefficientPattern::Sparse => 19,
            CoefficientPattern::Dense => 99,
            CoefficientPattern::Grouped => 41,
        };
        if self.p < min_p {
            return Err(Error::Config(format!(
                "{:?} coefficients need p >= {min_p}, got {}",
                self.pattern, self.p
            )));
        }
        match self.correlation {
            Correlation::Ar1 { rho } if !(rho.abs() < 1.0) => {
                Err(Error::Config(format!("AR(1) rate must lie in (-1, 1), got {rho}")))
            }
            Correlation::BlockExchangeable { rho } if !(0.0..1.0).contains(&rho) => Err(
                Error::Config(format!("exchangeable correlation must lie in [0, 1), got {rho}")),
            ),
            _ => match self.noise {
                Noise::Normal { variance } if !(variance > 0.0) => {
                    Err(Error::Config("noise variance must be positive".into()))
                }
                Noise::StudentT { df } if !(df > 0.0) => {
                    Err(Error::Config("degrees of freedom must be positive".into()))
                }
                _ => Ok(()),
            },
        }
    }

    /// Block sizes of the grouped layout.
    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![5, 5, 10, 10, 10];
        sizes.extend(std::iter::repeat((self.p - 40) / 10).take(10));
        sizes
    }

    /// Groups with weights `√p_g` for grouped designs.
    pub fn groups(&self) -> Option<GroupStructure> {
        (self.pattern == CoefficientPattern::Grouped)
            .then(|| GroupStructure::from_sizes(self.block_sizes()).expect("valid block sizes"))
    }

    /// True coefficient vector, intercept first.
    pub fn true_beta(&self) -> Vec<f64> {
        let mut beta = vec![0.0; self.p + 1];
        beta[0] = 4.0;
        match self.pattern {
            CoefficientPattern::Sparse => {
                let positive = [1.8, 1.6, 1.4, 1.2, 1.0];
                for (k, v) in positive.iter().enumerate() {
                    beta[1 + 2 * k] = *v;
                    beta[19 - 2 * k] = -v;
                }
            }
            CoefficientPattern::Dense => {
                for b in beta.iter_mut().take(100).skip(1) {
                    *b = 0.8;
                }
            }
            CoefficientPattern::Grouped => {
                let levels = [2.0, 1.6, -2.0, 1.0, 0.6];
                let mut start = 1;
                for (size, level) in self.block_sizes().into_iter().zip(levels) {
                    beta[start..start + size].fill(level);
                    start += size;
                }
            }
        }
        beta
    }
}

/// Lower Cholesky factor (row-major) of a symmetric positive definite matrix.
pub fn cholesky(a: &[f64], m: usize) -> Result<Vec<f64>> {
    check_dim(m * m, a.len())?;
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::InvalidInput("matrix is not positive definite".into()));
                }
                l[i * m + i] = s.sqrt();
            } else {
                l[i * m + j] = s / l[j * m + j];
            }
        }
    }
    Ok(l)
}

/// Covariance blocks: `(size, covariance)` in diagonal order.
fn covariance_blocks(design: &SimDesign) -> Vec<(usize, Vec<f64>)> {
    match design.correlation {
        Correlation::Ar1 { rho } => {
            let p = design.p;
            let mut s = vec![0.0; p * p];
            for j in 0..p {
                for k in 0..p {
                    s[j * p + k] = rho.powi((j as i32 - k as i32).abs());
                }
            }
            vec![(p, s)]
        }
        Correlation::BlockExchangeable { rho } => design
            .block_sizes()
            .into_iter()
            .map(|m| {
                let mut s = vec![rho; m * m];
                for j in 0..m {
                    s[j * m + j] = 1.0;
                }
                (m, s)
            })
            .collect(),
    }
}

/// Draws a dataset and its true coefficients using the design's seed.
pub fn generate(design: &SimDesign) -> Result<(Dataset, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    generate_with_rng(design, &mut rng)
}

pub fn generate_with_rng<R: Rng + ?Sized>(
    design: &SimDesign,
    rng: &mut R,
) -> Result<(Dataset, Vec<f64>)> {
    design.validate()?;
    let (n, p) = (design.n, design.p);
    let factors: Vec<(usize, Vec<f64>)> = covariance_blocks(design)
        .into_iter()
        .map(|(m, s)| cholesky(&s, m).map(|l| (m, l)))
        .collect::<Result<_>>()?;
    let beta = design.true_beta();
    let shift = design.noise.quantile(design.tau)?;
    let chi = match design.noise {
        Noise::StudentT { df } => Some(
            Gamma::new(df / 2.0, 2.0 / df)
                .map_err(|e| Error::Config(format!("invalid t degrees of freedom: {e}")))?,
        ),
        Noise::Normal { .. } => None,
    };

    let mut data = Vec::with_capacity(n * (p + 1));
    let mut y = Vec::with_capacity(n);
    let mut z = vec![0.0; p];
    for _ in 0..n {
        for zj in z.iter_mut() {
            *zj = StandardNormal.sample(rng);
        }
        let row_start = data.len();
        data.push(1.0);
        let mut offset = 0;
        for (m, l) in &factors {
            for i in 0..*m {
                let mut v = 0.0;
                for k in 0..=i {
                    v += l[i * m + k] * z[offset + k];
                }
                data.push(v);
            }
            offset += m;
        }
        let row = &data[row_start..];
        let mean: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
        let scale = 0.5 * row[p] + 1.0;
        let eps = design.noise.sample(rng, chi.as_ref());
        y.push(mean + scale * (eps - shift));
    }
    let x = DenseMatrix::from_row_major(n, p + 1, data)?;
    Ok((Dataset::new(y, x)?, beta))
}

/// Standard normal quantile.
pub fn normal_quantile(tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {tau}")));
    }
    Ok(-std::f64::consts::SQRT_2 * erfc_inv(2.0 * tau))
}

/// Student-t distribution function via the regularized incomplete beta.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    let tail = 0.5 * beta_reg(0.5 * df, 0.5, x);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Student-t quantile for real `df > 0`, by bisection on the incomplete-beta
/// argument.
pub fn t_quantile(tau: f64, df: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {tau}")));
    }
    if !(df > 0.0 && df.is_finite()) {
        return Err(Error::Domain(format!("degrees of freedom must be positive, got {df}")));
    }
    if tau == 0.5 {
        return Ok(0.0);
    }
    let upper = tau.min(1.0 - tau);
    // find x with ½ I_x(df/2, ½) = upper; I_x is increasing in x
    let target = 2.0 * upper;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(0.5 * df, 0.5, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let t = (df * (1.0 - x) / x).sqrt();
    Ok(if tau > 0.5 { t } else { -t })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub l2_error: f64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_tpr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_fpr: Option<f64>,
}

fn rate(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Estimation error over all coefficients and selection rates over the
/// non-intercept ones; a coefficient is selected iff it is not exactly zero.
pub fn compute_metrics(
    beta_hat: &[f64],
    beta_star: &[f64],
    groups: Option<&GroupStructure>,
) -> Result<Metrics> {
    check_dim(beta_star.len(), beta_hat.len())?;
    let l2_error = beta_hat
        .iter()
        .zip(beta_star)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let (mut tp, mut pos, mut fp, mut neg) = (0, 0, 0, 0);
    for (&b, &s) in beta_hat.iter().zip(beta_star).skip(1) {
        if s != 0.0 {
            pos += 1;
            tp += usize::from(b != 0.0);
        } else {
            neg += 1;
            fp += usize::from(b != 0.0);
        }
    }
    let (group_tpr, group_fpr) = match groups {
        Some(g) => {
            check_dim(g.dim(), beta_hat.len())?;
            let (mut gtp, mut gpos, mut gfp, mut gneg) = (0, 0, 0, 0);
            for r in g.ranges() {
                let truth = beta_star[r.clone()].iter().any(|v| *v != 0.0);
                let est = beta_hat[r].iter().any(|v| *v != 0.0);
                if truth {
                    gpos += 1;
                    gtp += usize::from(est);
                } else {
                    gneg += 1;
                    gfp += usize::from(est);
                }
            }
            (rate(gtp, gpos), rate(gfp, gneg))
        }
        None => (None, None),
    };
    Ok(Metrics {
        l2_error,
        tpr: rate(tp, pos),
        fpr: rate(fp, neg),
        group_tpr,
        group_fpr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Method {
    Lasso,
    ElasticNet { alpha: f64 },
    /// Uses the design's block structure.
    GroupLasso,
    /// Uses the design's block structure with the exact proximal map.
    SparseGroupLasso,
}

/// Penalized fit with λ chosen by k-fold cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    pub kernel: Kernel,
    /// Fixed bandwidth; the default rule is used when absent.
    pub bandwidth: Option<f64>,
    pub folds: usize,
    pub nlambda: usize,
    pub lambda_min_ratio: f64,
    pub solver: SolverConfig,
}

impl Default for MethodSpec {
    fn default() -> Self {
        Self {
            method: Method::Lasso,
            kernel: Kernel::Gaussian,
            bandwidth: None,
            folds: DEFAULT_FOLDS,
            nlambda: DEFAULT_PATH_LENGTH,
            lambda_min_ratio: DEFAULT_MIN_RATIO,
            solver: SolverConfig::default(),
        }
    }
}

impl MethodSpec {
    pub fn with_method(self, method: Method) -> Self {
        Self { method, ..self }
    }

    pub fn family(&self, groups: Option<GroupStructure>) -> Result<PenaltyFamily> {
        let need_groups = || {
            groups
                .clone()
                .ok_or_else(|| Error::Config("group penalties need a grouped design".into()))
        };
        Ok(match self.method {
            Method::Lasso => PenaltyFamily::lasso(),
            Method::ElasticNet { alpha } => PenaltyFamily::ElasticNet { alpha },
            Method::GroupLasso => PenaltyFamily::GroupLasso {
                groups: need_groups()?,
            },
            Method::SparseGroupLasso => PenaltyFamily::SparseGroupLasso {
                groups: need_groups()?,
                prox: Default::default(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub metrics: Metrics,
    pub selected_lambda: f64,
    pub bandwidth: f64,
    pub seconds: f64,
}

/// Dataset, true coefficients and fold seed of replication `rep`, drawn from
/// stream `rep` of ChaCha8 seeded with `design.seed`. The fold seed is the
/// first 64-bit output of the stream.
pub fn replication_data(design: &SimDesign, rep: u64) -> Result<(Dataset, Vec<f64>, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    rng.set_stream(rep);
    let fold_seed = rng.next_u64();
    let (data, beta_star) = generate_with_rng(design, &mut rng)?;
    Ok((data, beta_star, fold_seed))
}

/// Generates one dataset and fits it with cross-validated λ.
pub fn run_replication(
    design: &SimDesign,
    method: &MethodSpec,
    rep: u64,
) -> Result<ReplicationOutcome> {
    let (data, beta_star, fold_seed) = replication_data(design, rep)?;
    let started = Instant::now();
    let bandwidth = match method.bandwidth {
        Some(h) => h,
        None => default_bandwidth(design.n, design.p, design.tau)?,
    };
    let spec = Smoothing::new(design.tau, bandwidth, method.kernel)?;
    let groups = design.groups();
    let family = method.family(groups.clone())?;
    let lmax = lambda_max(&data, &spec, &family)?;
    let path = LambdaPath::geometric(lmax, method.lambda_min_ratio, method.nlambda)?;
    let cv = cross_validate(&data, &spec, &family, &path, method.folds, fold_seed, &method.solver)?;
    let seconds = started.elapsed().as_secs_f64();
    let metrics = compute_metrics(&cv.fit.beta, &beta_star, groups.as_ref())?;
    Ok(ReplicationOutcome {
        metrics,
        selected_lambda: cv.selected_lambda,
        bandwidth,
        seconds,
    })
}

/// Mean and standard error (`sd/√reps`; absent for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub se: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let k = values.len() as f64;
        let mean = pairwise_sum(values) / k;
        let se = (values.len() > 1).then(|| {
            let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
            (pairwise_sum(&dev) / (k - 1.0) / k).sqrt()
        });
        Some(Self { mean, se })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub design: SimDesign,
    pub method: MethodSpec,
    pub reps: usize,
    pub l2_error: Summary,
    pub tpr: Option<Summary>,
    pub fpr: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_tpr: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_fpr: Option<Summary>,
    pub seconds: Summary,
    pub outcomes: Vec<ReplicationOutcome>,
}

fn summarize_optional(values: impl Iterator<Item = Option<f64>>) -> Option<Summary> {
    let collected: Option<Vec<f64>> = values.collect();
    collected.and_then(|v| Summary::of(&v))
}

/// Runs `reps` independent replications (in parallel) and aggregates their
/// metrics in replication order.
pub fn run_replications(
    design: &SimDesign,
    method: &MethodSpec,
    reps: usize,
    seed: u64,
) -> Result<ReplicationSummary> {
    if reps == 0 {
        return Err(Error::Config("need at least one replication".into()));
    }
    let design = design.with_seed(seed);
    design.validate()?;
    let outcomes: Vec<ReplicationOutcome> = (0..reps)
        .into_par_iter()
        .map(|r| {
            run_replication(&design, method, r as u64).map_err(|e| Error::Replication {
                index: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = outcomes.iter().map(|o| o.metrics.l2_error).collect();
    let seconds: Vec<f64> = outcomes.iter().map(|o| o.seconds).collect();
    Ok(ReplicationSummary {
        design,
        method: *method,
        reps,
        l2_error: Summary::of(&errors).expect("reps > 0"),
        tpr: summarize_optional(outcomes.iter().map(|o| o.metrics.tpr)),
        fpr: summarize_optional(outcomes.iter().map(|o| o.metrics.fpr)),
        group_tpr: summarize_optional(outcomes.iter().map(|o| o.metrics.group_tpr)),
        group_fpr: summarize_optional(outcomes.iter().map(|o| o.metrics.group_fpr)),
        seconds: Summary::of(&seconds).expect("reps > 0"),
        outcomes,
    })
}

/// Error and timing at one dimension of a scaling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub p: usize,
    pub n: usize,
    pub l2_error: Summary,
    pub seconds: Summary,
}

/// Cross-validated fits on the sparse design with `n = 2p` for each `p`.
pub fn scaling_curve(
    dims: &[usize],
    noise: Noise,
    tau: f64,
    method: &MethodSpec,
    reps: usize,
    seed: u64,
) -> Result<Vec<ScalingPoint>> {
    dims.iter()
        .map(|&p| {
            let design = SimDesign::sparse(2 * p, p, noise, tau, seed);
            let summary = run_replications(&design, method, reps, seed)?;
            Ok(ScalingPoint {
                p,
                n: 2 * p,
                l2_error: summary.l2_error,
                seconds: summary.seconds,
            })
        })
        .collect()
}
