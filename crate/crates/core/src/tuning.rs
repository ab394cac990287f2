//! Regularization paths with warm starts and k-fold cross-validation scored
//! by the unsmoothed check loss.

use log::warn;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Smoothing;
use crate::objective::{
    check_loss_total, gradient, norm2, pairwise_sum, DenseMatrix, Dataset, Design,
};
use crate::penalty::{soft_threshold, GroupStructure, Penalty, SparseGroupProx};
use crate::solver::{lamm_fit, FitResult, SolverConfig};

/// Default number of λ values on a path.
pub const DEFAULT_PATH_LENGTH: usize = 50;
/// Default `λ_min / λ_max`.
pub const DEFAULT_MIN_RATIO: f64 = 0.01;
/// Default number of cross-validation folds.
pub const DEFAULT_FOLDS: usize = 10;

// gradients below this at the intercept-only fit are rounding noise
const DEGENERATE_LAMBDA: f64 = 1e-12;
// relative headroom so that rounding in the proximal threshold cannot let a
// coefficient leave zero at λ_max itself
const LAMBDA_MAX_HEADROOM: f64 = 1e-10;

/// A penalty shape whose overall strength is set by a single `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PenaltyFamily {
    /// `λ Σ_j f_j |β_j|`; `factors` default to 1 (intercept factor is 0).
    Lasso { factors: Option<Vec<f64>> },
    ElasticNet { alpha: f64 },
    GroupLasso { groups: GroupStructure },
    SparseGroupLasso {
        groups: GroupStructure,
        #[serde(default)]
        prox: SparseGroupProx,
    },
}

impl PenaltyFamily {
    pub fn lasso() -> Self {
        PenaltyFamily::Lasso { factors: None }
    }

    pub fn at(&self, lambda: f64, dim: usize) -> Penalty {
        match self {
            PenaltyFamily::Lasso { factors: None } => Penalty::lasso(lambda, dim),
            PenaltyFamily::Lasso {
                factors: Some(factors),
            } => Penalty::WeightedLasso {
                weights: factors.iter().map(|f| lambda * f).collect(),
            },
            PenaltyFamily::ElasticNet { alpha } => Penalty::ElasticNet {
                lambda,
                alpha: *alpha,
            },
            PenaltyFamily::GroupLasso { groups } => Penalty::GroupLasso {
                lambda,
                groups: groups.clone(),
            },
            PenaltyFamily::SparseGroupLasso { groups, prox } => Penalty::SparseGroupLasso {
                lambda,
                groups: groups.clone(),
                prox: *prox,
            },
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.at(1.0, dim).validate(dim)
    }
}

/// Strictly decreasing sequence of positive λ values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPath {
    values: Vec<f64>,
}

impl LambdaPath {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("lambda path is empty".into()));
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("lambda values must be positive and finite".into()));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("lambda path must be strictly decreasing".into()));
        }
        Ok(Self { values })
    }

    /// `count` values spaced geometrically from `lambda_max` down to
    /// `min_ratio · lambda_max`.
    pub fn geometric(lambda_max: f64, min_ratio: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidInput("lambda path needs at least one value".into()));
        }
        if !(min_ratio > 0.0 && min_ratio < 1.0) {
            return Err(Error::InvalidInput(format!(
                "lambda_min ratio must lie in (0, 1), got {min_ratio}"
            )));
        }
        if count == 1 {
            return Self::new(vec![lambda_max]);
        }
        let step = min_ratio.ln() / (count - 1) as f64;
        let values = (0..count)
            .map(|k| lambda_max * (step * k as f64).exp())
            .collect();
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The first `len` values.
    pub fn truncated(&self, len: usize) -> Self {
        Self {
            values: self.values[..len.clamp(1, self.values.len())].to_vec(),
        }
    }
}

/// Minimizer of `n⁻¹ Σ ℓ_{h,τ}(y_i - b)` over the scalar `b`.
pub fn intercept_only_fit(y: &[f64], spec: &Smoothing) -> f64 {
    let slope = |b: f64| -> f64 {
        // derivative of the objective in b, non-decreasing
        -y.iter().map(|&v| spec.derivative(v - b)).sum::<f64>()
    };
    let (ymin, ymax) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let pad = 10.0 * spec.bandwidth() + 1.0;
    let (mut lo, mut hi) = (ymin - pad, ymax + pad);
    while slope(lo) > 0.0 {
        lo -= 2.0 * (hi - lo);
    }
    while slope(hi) < 0.0 {
        hi += 2.0 * (hi - lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Coefficients with the intercept at its intercept-only optimum and zeros
/// elsewhere.
pub fn null_fit<D: Design>(data: &Dataset<D>, spec: &Smoothing) -> Vec<f64> {
    let mut beta = vec![0.0; data.dim()];
    beta[0] = intercept_only_fit(data.y(), spec);
    beta
}

/// Smallest λ whose penalized solution has every non-intercept coefficient
/// equal to zero.
pub fn lambda_max<D: Design>(
    data: &Dataset<D>,
    spec: &Smoothing,
    family: &PenaltyFamily,
) -> Result<f64> {
    family.validate(data.dim())?;
    let beta = null_fit(data, spec);
    let g = gradient(data, &beta, spec)?;
    let value = match family {
        PenaltyFamily::Lasso { factors } => g
            .iter()
            .enumerate()
            .skip(1)
            .filter_map(|(j, gj)| {
                let f = factors.as_ref().map_or(1.0, |f| f[j]);
                (f > 0.0).then(|| gj.abs() / f)
            })
            .fold(0.0, f64::max),
        PenaltyFamily::ElasticNet { alpha } => {
            let l1 = g[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if *alpha > 0.0 {
                l1 / alpha
            } else {
                l1
            }
        }
        PenaltyFamily::GroupLasso { groups } => groups
            .ranges()
            .zip(groups.weights())
            .map(|(r, w)| norm2(&g[r]) / w)
            .fold(0.0, f64::max),
        PenaltyFamily::SparseGroupLasso { groups, prox } => groups
            .ranges()
            .zip(groups.weights())
            .map(|(r, &w)| sparse_group_threshold(&g[r], w, *prox))
            .fold(0.0, f64::max),
    };
    if !(value > DEGENERATE_LAMBDA) || !value.is_finite() {
        warn!("degenerate lambda_max ({value}); response is constant or fully explained by the intercept, using 1.0");
        return Ok(1.0);
    }
    Ok(value * (1.0 + LAMBDA_MAX_HEADROOM))
}

/// Smallest λ for which a block with gradient `g` stays at zero under the
/// sparse group lasso update.
fn sparse_group_threshold(g: &[f64], weight: f64, prox: SparseGroupProx) -> f64 {
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let stays_zero = |lambda: f64| -> bool {
        match prox {
            SparseGroupProx::Exact => {
                let s: f64 = g.iter().map(|&v| soft_threshold(v, lambda).powi(2)).sum();
                s.sqrt() <= lambda * weight
            }
            SparseGroupProx::UnthresholdedNorm => {
                gmax <= lambda || norm2(g) <= lambda * weight
            }
        }
    };
    if gmax == 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, gmax);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if stays_zero(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Fits every λ of the path from largest to smallest, warm-starting each fit
/// from the previous solution. The first fit starts from the intercept-only
/// solution.
pub fn fit_path<D: Design>(
    data: &Dataset<D>,
    spec: &Smoothing,
    family: &PenaltyFamily,
    path: &LambdaPath,
    config: &SolverConfig,
) -> Result<Vec<FitResult>> {
    family.validate(data.dim())?;
    let mut warm = null_fit(data, spec);
    let mut fits = Vec::with_capacity(path.len());
    for (index, &lambda) in path.values().iter().enumerate() {
        let penalty = family.at(lambda, data.dim());
        let fit = lamm_fit(data, spec, &penalty, config, Some(&warm)).map_err(|e| Error::Path {
            index,
            source: Box::new(e),
        })?;
        warm.clone_from(&fit.beta);
        fits.push(fit);
    }
    Ok(fits)
}

/// Seeded Fisher–Yates permutation of `0..n`.
///
/// For `i = n-1, …, 1` the swap index is `⌊u · (i+1) / 2⁶⁴⌋` where `u` is the
/// next 64-bit output of ChaCha8 seeded with `seed` (stream 0).
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = ((rng.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Splits a seeded permutation into `k` contiguous blocks whose sizes differ
/// by at most one (the first `n mod k` blocks are larger).
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::Config(format!("cannot split {n} observations into {k} folds")));
    }
    let perm = seeded_permutation(n, seed);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(perm[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    /// Mean validation check loss per λ, averaged over folds.
    pub mean_loss: Vec<f64>,
    /// Standard error of the fold losses per λ.
    pub std_error: Vec<f64>,
    pub selected_index: usize,
    pub selected_lambda: f64,
    /// Full-data fit at the selected λ.
    pub fit: FitResult,
    pub seed: u64,
    pub folds: usize,
}

/// Index of the smallest mean loss; ties go to the earliest (largest) λ.
fn select_lambda(mean_loss: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in mean_loss.iter().enumerate().skip(1) {
        if v < mean_loss[best] {
            best = i;
        }
    }
    best
}

/// k-fold cross-validation over a λ path, scoring held-out folds with the
/// unsmoothed check loss, then refitting on all data at the selected λ.
pub fn cross_validate(
    data: &Dataset<DenseMatrix>,
    spec: &Smoothing,
    family: &PenaltyFamily,
    path: &LambdaPath,
    k: usize,
    seed: u64,
    config: &SolverConfig,
) -> Result<CvResult> {
    let n = data.n();
    let folds = fold_assignment(n, k, seed)?;
    if let Some(f) = folds.iter().position(|fold| n - fold.len() < 2) {
        return Err(Error::Config(format!(
            "fold {f} leaves fewer than 2 training observations"
        )));
    }
    family.validate(data.dim())?;

    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, held_out)| -> Result<Vec<f64>> {
            let mut in_fold = vec![false; n];
            for &i in held_out {
                in_fold[i] = true;
            }
            let train_rows: Vec<usize> = (0..n).filter(|&i| !in_fold[i]).collect();
            let train = data.select_rows(&train_rows);
            let test = data.select_rows(held_out);
            let fits = fit_path(&train, spec, family, path, config).map_err(|e| Error::Fold {
                fold: f,
                source: Box::new(e),
            })?;
            fits.iter()
                .map(|fit| check_loss_total(&test, &fit.beta, spec.tau()))
                .collect()
        })
        .collect::<Result<_>>()?;

    let kf = k as f64;
    let mut mean_loss = Vec::with_capacity(path.len());
    let mut std_error = Vec::with_capacity(path.len());
    for l in 0..path.len() {
        let losses: Vec<f64> = per_fold.iter().map(|fold| fold[l]).collect();
        let mean = pairwise_sum(&losses) / kf;
        let var = losses.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (kf - 1.0);
        mean_loss.push(mean);
        std_error.push((var / kf).sqrt());
    }
    let selected_index = select_lambda(&mean_loss);
    let refit = fit_path(data, spec, family, &path.truncated(selected_index + 1), config)?;
    let fit = refit.into_iter().last().expect("truncated path is non-empty");

    Ok(CvResult {
        lambdas: path.values().to_vec(),
        mean_loss,
        std_error,
        selected_index,
        selected_lambda: path.values()[selected_index],
        fit,
        seed,
        folds: k,
    })
}
