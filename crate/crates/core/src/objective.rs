//! Empirical smoothed quantile objective `Q(β) = n⁻¹ Σ ℓ_{h,τ}(y_i - x_iᵀβ)`,
//! its gradient, and the unsmoothed check-loss total used for validation.

use crate::error::{check_dim, Error, Result};
use crate::kernel::{rho, Smoothing};

/// Linear operator standing in for the covariate matrix.
///
/// `multiply` and `transpose_multiply` must be adjoint to each other.
pub trait Design: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `out = X β`
    fn multiply(&self, beta: &[f64], out: &mut [f64]);
    /// `out = Xᵀ v`
    fn transpose_multiply(&self, v: &[f64], out: &mut [f64]);
}

/// Dense row-major covariate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_row_major(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(nrows * ncols, data.len())?;
        Ok(Self { nrows, ncols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for row in rows {
            check_dim(ncols, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self {
            nrows: rows.len(),
            ncols,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Matrix made of the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.ncols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Self {
            nrows: rows.len(),
            ncols: self.ncols,
            data,
        }
    }
}

impl Design for DenseMatrix {
    fn nrows(&self) -> usize {
        self.nrows
    }

    fn ncols(&self) -> usize {
        self.ncols
    }

    fn multiply(&self, beta: &[f64], out: &mut [f64]) {
        let support: Vec<usize> = (0..self.ncols).filter(|&j| beta[j] != 0.0).collect();
        if support.len() * 2 < self.ncols {
            for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.ncols)) {
                *o = support.iter().map(|&j| row[j] * beta[j]).sum();
            }
        } else {
            for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.ncols)) {
                *o = dot(row, beta);
            }
        }
    }

    fn transpose_multiply(&self, v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (&vi, row) in v.iter().zip(self.data.chunks_exact(self.ncols)) {
            if vi != 0.0 {
                for (o, &x) in out.iter_mut().zip(row) {
                    *o += vi * x;
                }
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize without reassociating
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Response vector plus a design whose first column is identically one.
#[derive(Debug, Clone)]
pub struct Dataset<D = DenseMatrix> {
    y: Vec<f64>,
    design: D,
}

impl<D: Design> Dataset<D> {
    pub fn new(y: Vec<f64>, design: D) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidInput("dataset needs at least one observation".into()));
        }
        check_dim(y.len(), design.nrows())?;
        if design.ncols() == 0 {
            return Err(Error::InvalidInput("design has no columns".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("response {i} is not finite")));
        }
        let mut e0 = vec![0.0; design.ncols()];
        e0[0] = 1.0;
        let mut first = vec![0.0; design.nrows()];
        design.multiply(&e0, &mut first);
        if let Some(i) = first.iter().position(|&v| v != 1.0) {
            return Err(Error::InvalidInput(format!(
                "first design column must be identically 1 (row {i} has {})",
                first[i]
            )));
        }
        Ok(Self { y, design })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of coefficients, intercept included.
    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn design(&self) -> &D {
        &self.design
    }

    /// `r = y - X β`
    pub fn residuals_into(&self, beta: &[f64], out: &mut [f64]) {
        self.design.multiply(beta, out);
        for (r, &yi) in out.iter_mut().zip(&self.y) {
            *r = yi - *r;
        }
    }

    pub fn residuals(&self, beta: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), beta.len())?;
        let mut r = vec![0.0; self.n()];
        self.residuals_into(beta, &mut r);
        Ok(r)
    }
}

impl Dataset<DenseMatrix> {
    /// Builds a dataset from covariate rows without the intercept column;
    /// the intercept is prepended.
    pub fn with_intercept(y: Vec<f64>, covariates: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = covariates
            .iter()
            .map(|row| {
                let mut full = Vec::with_capacity(row.len() + 1);
                full.push(1.0);
                full.extend_from_slice(row);
                full
            })
            .collect();
        for (i, row) in rows.iter().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "covariate ({i}, {}) is not finite",
                    j - 1
                )));
            }
        }
        Self::new(y, DenseMatrix::from_rows(&rows)?)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            design: self.design.select_rows(rows),
        }
    }
}

/// Mean smoothed loss over a residual vector.
pub(crate) fn mean_loss(residuals: &[f64], spec: &Smoothing) -> f64 {
    pairwise_sum_by(residuals, &|r| spec.loss(r)) / residuals.len() as f64
}

/// Gradient of `Q` from precomputed residuals; `scratch` has length n.
pub(crate) fn gradient_from_residuals<D: Design>(
    data: &Dataset<D>,
    residuals: &[f64],
    spec: &Smoothing,
    scratch: &mut [f64],
    out: &mut [f64],
) {
    let h = spec.bandwidth();
    let tau = spec.tau();
    let kernel = spec.kernel();
    for (w, &r) in scratch.iter_mut().zip(residuals) {
        *w = kernel.cdf(-r / h) - tau;
    }
    data.design().transpose_multiply(scratch, out);
    let scale = 1.0 / residuals.len() as f64;
    for g in out.iter_mut() {
        *g *= scale;
    }
}

/// `Q(β)`.
pub fn loss_value<D: Design>(data: &Dataset<D>, beta: &[f64], spec: &Smoothing) -> Result<f64> {
    let r = data.residuals(beta)?;
    Ok(mean_loss(&r, spec))
}

/// `∇Q(β) = n⁻¹ Σ x_i [K̄(-r_i/h) - τ]`.
pub fn gradient<D: Design>(data: &Dataset<D>, beta: &[f64], spec: &Smoothing) -> Result<Vec<f64>> {
    let r = data.residuals(beta)?;
    let mut scratch = vec![0.0; data.n()];
    let mut g = vec![0.0; data.dim()];
    gradient_from_residuals(data, &r, spec, &mut scratch, &mut g);
    Ok(g)
}

/// Value and gradient sharing one residual computation.
pub fn value_and_gradient<D: Design>(
    data: &Dataset<D>,
    beta: &[f64],
    spec: &Smoothing,
) -> Result<(f64, Vec<f64>)> {
    let r = data.residuals(beta)?;
    let mut scratch = vec![0.0; data.n()];
    let mut g = vec![0.0; data.dim()];
    gradient_from_residuals(data, &r, spec, &mut scratch, &mut g);
    Ok((mean_loss(&r, spec), g))
}

/// Mean unsmoothed check loss `n⁻¹ Σ ρ_τ(y_i - x_iᵀβ)`.
pub fn check_loss_total<D: Design>(data: &Dataset<D>, beta: &[f64], tau: f64) -> Result<f64> {
    crate::kernel::check_loss(0.0, tau)?;
    let r = data.residuals(beta)?;
    Ok(pairwise_sum_by(&r, &|u| rho(u, tau)) / r.len() as f64)
}

/// Pairwise summation of `f(x)` over a slice; result does not depend on
/// evaluation order beyond the fixed recursion.
pub(crate) fn pairwise_sum_by(xs: &[f64], f: &impl Fn(f64) -> f64) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        xs.iter().map(|&x| f(x)).sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum_by(&xs[..mid], f) + pairwise_sum_by(&xs[mid..], f)
    }
}

pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    pairwise_sum_by(xs, &|x| x)
}
