//! Independent oracles shared by the integration tests and the acceptance
//! suite. Nothing here calls into the library's numerical routines.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;
use smoothqr::{Dataset, DenseMatrix, FitResult, GroupStructure, Kernel, Penalty};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Kernel densities written out directly.
pub fn density(kernel: Kernel, t: f64) -> f64 {
    match kernel {
        Kernel::Uniform => {
            if t.abs() <= 1.0 {
                0.5
            } else {
                0.0
            }
        }
        Kernel::Gaussian => (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt(),
        Kernel::Logistic => {
            let e = (-t.abs()).exp();
            e / ((1.0 + e) * (1.0 + e))
        }
        Kernel::Epanechnikov => {
            if t.abs() <= 1.0 {
                0.75 * (1.0 - t * t)
            } else {
                0.0
            }
        }
        Kernel::Triangular => (1.0 - t.abs()).max(0.0),
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature on `[a, b]`, splitting first at `breaks`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut points = vec![a];
    // unit-width pieces keep Simpson from missing mass between samples
    let grid = (a.ceil() as i64..=b.floor() as i64).map(|k| k as f64);
    let mut inner: Vec<f64> = breaks.iter().copied().chain(grid).filter(|&c| c > a && c < b).collect();
    inner.sort_by(f64::total_cmp);
    points.extend(inner);
    points.push(b);
    points
        .windows(2)
        .map(|w| {
            let (lo, hi) = (w[0], w[1]);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = simpson(lo, hi, fa, fm, fb);
            adaptive(f, lo, hi, fa, fm, fb, whole, tol, 50)
        })
        .sum()
}

pub fn check(u: f64, tau: f64) -> f64 {
    u * (tau - if u < 0.0 { 1.0 } else { 0.0 })
}

/// `∫ ρ_τ(u + h t) K(t) dt` by quadrature.
pub fn smoothed_loss_quadrature(kernel: Kernel, tau: f64, h: f64, u: f64) -> f64 {
    let (lo, hi) = match kernel {
        Kernel::Gaussian => (-40.0, 40.0),
        Kernel::Logistic => (-60.0, 60.0),
        _ => (-1.0, 1.0),
    };
    let f = |t: f64| check(u + h * t, tau) * density(kernel, t);
    integrate(&f, lo, hi, &[-u / h, 0.0], 1e-14)
}

/// Random dataset with an intercept column.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
    let mut data = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    let beta: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
    for _ in 0..n {
        let mut mean = beta[0];
        data.push(1.0);
        for b in &beta[1..] {
            let x = normal(rng);
            data.push(x);
            mean += b * x;
        }
        y.push(mean + normal(rng));
    }
    Dataset::new(y, DenseMatrix::from_row_major(n, d, data).unwrap()).unwrap()
}

/// Mean smoothed loss from the kernel's closed form, evaluated naively.
pub fn naive_loss(data: &Dataset, beta: &[f64], kernel: Kernel, tau: f64, h: f64) -> f64 {
    let x = data.design();
    let n = data.n();
    (0..n)
        .map(|i| {
            let fit: f64 = x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
            let u = data.y()[i] - fit;
            // ℓ(u) = (τ - ½)u + (h/2) E|u/h + Z|
            (tau - 0.5) * u + 0.5 * h * abs_mean_oracle(kernel, u / h)
        })
        .sum::<f64>()
        / n as f64
}

/// `E|t + Z|` by quadrature.
pub fn abs_mean_oracle(kernel: Kernel, t: f64) -> f64 {
    let (lo, hi) = match kernel {
        Kernel::Gaussian => (-40.0, 40.0),
        Kernel::Logistic => (-60.0, 60.0),
        _ => (-1.0, 1.0),
    };
    let f = |z: f64| (t + z).abs() * density(kernel, z);
    integrate(&f, lo, hi, &[-t, 0.0], 1e-13)
}

/// `argmin_β φ/2 ‖β - u‖² + P(β)` written independently of the library.
pub fn reference_prox(u: &[f64], phi: f64, penalty: &Penalty) -> Vec<f64> {
    let soft = |a: f64, b: f64| a.signum() * (a.abs() - b).max(0.0);
    let mut out = u.to_vec();
    match penalty {
        Penalty::WeightedLasso { weights } => {
            for j in 1..u.len() {
                out[j] = soft(u[j], weights[j] / phi);
            }
        }
        Penalty::ElasticNet { lambda, alpha } => {
            for j in 1..u.len() {
                out[j] = soft(u[j], lambda * alpha / phi) / (1.0 + 2.0 * lambda * (1.0 - alpha) / phi);
            }
        }
        Penalty::GroupLasso { lambda, groups } => {
            let mut start = 1;
            for (&size, &w) in groups.sizes().iter().zip(groups.weights()) {
                let block = &u[start..start + size];
                let norm = block.iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = if norm > 0.0 { (1.0 - lambda * w / (phi * norm)).max(0.0) } else { 0.0 };
                for k in 0..size {
                    out[start + k] = scale * block[k];
                }
                start += size;
            }
        }
        Penalty::SparseGroupLasso { lambda, groups, .. } => {
            let mut start = 1;
            for (&size, &w) in groups.sizes().iter().zip(groups.weights()) {
                let s: Vec<f64> = u[start..start + size].iter().map(|&v| soft(v, lambda / phi)).collect();
                let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = if norm > 0.0 { (1.0 - lambda * w / (phi * norm)).max(0.0) } else { 0.0 };
                for k in 0..size {
                    out[start + k] = scale * s[k];
                }
                start += size;
            }
        }
    }
    out
}

/// `P(β)` written independently of the library.
pub fn reference_penalty(beta: &[f64], penalty: &Penalty) -> f64 {
    let rest = &beta[1..];
    let group_sum = |groups: &GroupStructure| {
        let mut start = 1;
        let mut s = 0.0;
        for (&size, &w) in groups.sizes().iter().zip(groups.weights()) {
            s += w * beta[start..start + size].iter().map(|v| v * v).sum::<f64>().sqrt();
            start += size;
        }
        s
    };
    match penalty {
        Penalty::WeightedLasso { weights } => rest.iter().zip(&weights[1..]).map(|(b, w)| w * b.abs()).sum(),
        Penalty::ElasticNet { lambda, alpha } => {
            lambda * alpha * rest.iter().map(|b| b.abs()).sum::<f64>()
                + lambda * (1.0 - alpha) * rest.iter().map(|b| b * b).sum::<f64>()
        }
        Penalty::GroupLasso { lambda, groups } => lambda * group_sum(groups),
        Penalty::SparseGroupLasso { lambda, groups, .. } => {
            lambda * (rest.iter().map(|b| b.abs()).sum::<f64>() + group_sum(groups))
        }
    }
}

pub fn max_density(kernel: Kernel) -> f64 {
    match kernel {
        Kernel::Uniform => 0.5,
        Kernel::Gaussian => 1.0 / (2.0 * std::f64::consts::PI).sqrt(),
        Kernel::Logistic => 0.25,
        Kernel::Epanechnikov => 0.75,
        Kernel::Triangular => 1.0,
    }
}

const STALL_WINDOW: usize = 1000;

/// Proximal gradient with the fixed step `1/L`, `L = max K · λ_max(XᵀX/n) / h`,
/// run until the objective decreases by at most `stall` over a window of
/// iterations.
pub fn reference_solver(
    data: &Dataset,
    penalty: &Penalty,
    kernel: Kernel,
    tau: f64,
    h: f64,
    stall: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let n = data.n();
    let d = data.dim();
    let x = data.design();
    // power iteration on XᵀX/n
    let mut v = vec![1.0; d];
    let mut eig = 0.0;
    for _ in 0..500 {
        let mut w = vec![0.0; d];
        for i in 0..n {
            let row = x.row(i);
            let xv: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            for j in 0..d {
                w[j] += row[j] * xv / n as f64;
            }
        }
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        eig = norm;
        v = w.iter().map(|a| a / norm).collect();
    }
    let lipschitz = 1.05 * eig * max_density(kernel) / h;
    let phi = lipschitz;
    let cdf = |t: f64| kernel_cdf(kernel, t);
    let objective = |beta: &[f64]| {
        let q: f64 = (0..n)
            .map(|i| {
                let fit: f64 = x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
                let u = data.y()[i] - fit;
                (tau - 0.5) * u + 0.5 * h * closed_abs_mean(kernel, u / h)
            })
            .sum::<f64>()
            / n as f64;
        q + reference_penalty(beta, penalty)
    };
    let mut beta = vec![0.0; d];
    let mut f = objective(&beta);
    let mut checkpoint = f;
    for iter in 1..=max_iter {
        let mut grad = vec![0.0; d];
        for i in 0..n {
            let row = x.row(i);
            let fit: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let r = data.y()[i] - fit;
            let w = cdf(-r / h) - tau;
            for j in 0..d {
                grad[j] += row[j] * w / n as f64;
            }
        }
        let u: Vec<f64> = beta.iter().zip(&grad).map(|(b, g)| b - g / phi).collect();
        let next = reference_prox(&u, phi, penalty);
        beta = next;
        f = objective(&beta);
        if iter % STALL_WINDOW == 0 {
            if checkpoint - f <= stall {
                break;
            }
            checkpoint = f;
        }
    }
    (beta, f)
}

/// `E|t + Z|` in closed form, written independently of the library.
pub fn closed_abs_mean(kernel: Kernel, t: f64) -> f64 {
    let a = t.abs();
    match kernel {
        Kernel::Uniform => {
            if a >= 1.0 {
                a
            } else {
                0.5 * (t * t + 1.0)
            }
        }
        Kernel::Gaussian => {
            let phi = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
            t * (1.0 - erfc(t / std::f64::consts::SQRT_2)) + 2.0 * phi
        }
        Kernel::Logistic => a + 2.0 * (-a).exp().ln_1p(),
        Kernel::Epanechnikov => {
            if a >= 1.0 {
                a
            } else {
                0.375 + 0.75 * t * t - t.powi(4) / 8.0
            }
        }
        Kernel::Triangular => {
            if a >= 1.0 {
                a
            } else {
                t * t - a.powi(3) / 3.0 + 1.0 / 3.0
            }
        }
    }
}

/// Kernel distribution functions written out directly.
pub fn kernel_cdf(kernel: Kernel, t: f64) -> f64 {
    let c = t.clamp(-1.0, 1.0);
    match kernel {
        Kernel::Gaussian => 0.5 * erfc(-t / std::f64::consts::SQRT_2),
        Kernel::Logistic => 1.0 / (1.0 + (-t).exp()),
        Kernel::Uniform => 0.5 * (c + 1.0),
        Kernel::Epanechnikov => 0.5 + 0.75 * c - 0.25 * c.powi(3),
        Kernel::Triangular => {
            if c < 0.0 {
                0.5 * (1.0 + c).powi(2)
            } else {
                1.0 - 0.5 * (1.0 - c).powi(2)
            }
        }
    }
}

/// Whether `next` exceeds `prev` by more than rounding in evaluating the
/// objective (a few units in the last place).
pub fn rose(prev: f64, next: f64) -> bool {
    next > prev + 4.0 * f64::EPSILON * prev.abs()
}

/// Asserts descent of `Q + P` and non-negative majorization margins.
pub fn assert_descent(fit: &FitResult) {
    for (k, w) in fit.objective_trace.windows(2).enumerate() {
        assert!(!rose(w[0], w[1]), "objective rose at iterate {}: {} -> {}", k + 1, w[0], w[1]);
    }
    for (k, m) in fit.majorization_margins.iter().enumerate() {
        assert!(*m >= 0.0, "majorization violated at iterate {}: {m}", k + 1);
    }
}

/// Number of descent or majorization violations in a fit.
pub fn descent_violations(fit: &FitResult) -> usize {
    fit.objective_trace.windows(2).filter(|w| rose(w[0], w[1])).count()
        + fit.majorization_margins.iter().filter(|m| **m < 0.0).count()
}
pub mod checks;
