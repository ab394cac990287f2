//! Instance generators and error measures shared by the integration tests
//! and the acceptance suite.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use smoothqr::{
    gradient, lamm_fit, loss_value, prox_step, GroupStructure, Kernel, Penalty, Smoothing,
    SolverConfig, SparseGroupProx,
};

use super::{assert_descent, random_dataset, reference_penalty, reference_solver, rng};

/// Relative error of the analytic gradient against central differences.
pub fn gradient_fd_error(seed: u64, kernel: Kernel) -> f64 {
    let mut r = rng(seed);
    let data = random_dataset(&mut r, 40, 8);
    let tau = r.gen_range(0.1..0.9);
    let h = r.gen_range(0.3..1.0);
    let spec = Smoothing::new(tau, h, kernel).unwrap();
    let beta: Vec<f64> = (0..8).map(|_| r.gen_range(-1.0..1.0)).collect();
    let g = gradient(&data, &beta, &spec).unwrap();
    let step = 1e-5;
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..8 {
        let mut up = beta.clone();
        let mut down = beta.clone();
        up[j] += step;
        down[j] -= step;
        let fd = (loss_value(&data, &up, &spec).unwrap() - loss_value(&data, &down, &spec).unwrap()) / (2.0 * step);
        num += (g[j] - fd).powi(2);
        den += fd * fd;
    }
    num.sqrt() / den.sqrt().max(1e-3)
}

pub fn prox_objective(beta: &[f64], u: &[f64], phi: f64, penalty: &Penalty) -> f64 {
    let quad: f64 = beta.iter().zip(u).map(|(b, v)| (b - v).powi(2)).sum();
    0.5 * phi * quad + reference_penalty(beta, penalty)
}

/// Smallest prox objective over a grid of step 1e-3 covering the box
/// between 0 and `u` in every penalized coordinate, intercept fixed at `u₀`.
pub fn grid_minimum(u: &[f64], phi: f64, penalty: &Penalty) -> f64 {
    let step = 1e-3;
    let axes: Vec<Vec<f64>> = u[1..]
        .iter()
        .map(|&v| {
            let count = (v.abs() / step).ceil() as usize;
            let mut axis: Vec<f64> = (0..=count).map(|k| v.signum() * (k as f64 * step).min(v.abs())).collect();
            axis.push(v);
            axis
        })
        .collect();
    let mut best = f64::INFINITY;
    let mut point = u.to_vec();
    let mut idx = vec![0usize; axes.len()];
    loop {
        for (j, axis) in axes.iter().enumerate() {
            point[j + 1] = axis[idx[j]];
        }
        best = best.min(prox_objective(&point, u, phi, penalty));
        let mut j = 0;
        loop {
            if j == axes.len() {
                return best;
            }
            idx[j] += 1;
            if idx[j] < axes[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Random instance of dimension 2..=4 for penalty family `family`
/// (0 lasso, 1 elastic net, 2 group lasso, 3 sparse group lasso).
pub fn random_instance(r: &mut ChaCha8Rng, family: usize) -> (Vec<f64>, Vec<f64>, f64, Penalty) {
    let d = r.gen_range(2..=4);
    // keep the grid small enough to enumerate
    let scale = [0.0, 0.6, 0.3, 0.12][d - 1];
    let phi = r.gen_range(0.5..4.0);
    let u: Vec<f64> = (0..d).map(|_| r.gen_range(-scale..scale)).collect();
    let v: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
    // grad chosen so that v - grad/φ = u
    let grad: Vec<f64> = v.iter().zip(&u).map(|(a, b)| phi * (a - b)).collect();
    let lambda = r.gen_range(0.0..0.4) * phi * scale;
    let mut groups = || {
        let sizes = if d == 4 && r.gen_bool(0.5) { vec![1, 2] } else { vec![d - 1] };
        GroupStructure::from_sizes(sizes).unwrap()
    };
    let penalty = match family {
        0 => {
            let mut w: Vec<f64> = (0..d).map(|_| r.gen_range(0.0..1.0) * lambda).collect();
            w[0] = 0.0;
            Penalty::WeightedLasso { weights: w }
        }
        1 => Penalty::ElasticNet { lambda, alpha: r.gen_range(0.0..1.0) },
        2 => Penalty::GroupLasso { lambda, groups: groups() },
        _ => Penalty::SparseGroupLasso {
            lambda: 0.5 * lambda,
            groups: groups(),
            prox: SparseGroupProx::Exact,
        },
    };
    (v, grad, phi, penalty)
}

/// Prox objective at the closed-form step minus the grid minimum.
pub fn prox_gap(seed: u64, family: usize) -> f64 {
    let mut r = rng(seed);
    let (v, grad, phi, penalty) = random_instance(&mut r, family);
    let u: Vec<f64> = v.iter().zip(&grad).map(|(a, g)| a - g / phi).collect();
    let beta = prox_step(&v, &grad, phi, &penalty).unwrap();
    prox_objective(&beta, &u, phi, &penalty) - grid_minimum(&u, phi, &penalty)
}

/// Worst objective gap and coefficient distance between LAMM and the
/// reference proximal gradient solver over `count` instances of `family`
/// (0 lasso, 1 elastic net, 2 group lasso).
pub fn reference_agreement(family: usize, count: u64) -> (f64, f64) {
    let config = SolverConfig::default().with_epsilon(1e-10);
    let mut worst = (0.0f64, 0.0f64);
    for seed in 0..count {
        let mut r = rng(50_000 + 100 * family as u64 + seed);
        let data = random_dataset(&mut r, 20, 5);
        let kernel = Kernel::ALL[(seed % 5) as usize];
        let tau = r.gen_range(0.2..0.8);
        let h = r.gen_range(0.5..1.0);
        let lambda = r.gen_range(0.01..0.2);
        let penalty = match family {
            0 => Penalty::lasso(lambda, 5),
            1 => Penalty::ElasticNet { lambda, alpha: r.gen_range(0.1..0.9) },
            _ => Penalty::GroupLasso { lambda, groups: GroupStructure::from_sizes(vec![2, 2]).unwrap() },
        };
        let spec = Smoothing::new(tau, h, kernel).unwrap();
        let fit = lamm_fit(&data, &spec, &penalty, &config, None).unwrap();
        assert!(fit.converged);
        assert_descent(&fit);
        let (beta, objective) = reference_solver(&data, &penalty, kernel, tau, h, 1e-12, 2_000_000);
        let gap = (fit.objective() - objective).abs();
        let dist = fit.beta.iter().zip(&beta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst = (worst.0.max(gap), worst.1.max(dist));
    }
    worst
}

/// Fits at the computed `λ_max` on a random instance. Returns whether every
/// non-intercept coefficient is exactly zero, the KKT residual of the fit,
/// and whether a fit at `0.9 λ_max` leaves the origin.
pub fn lambda_max_instance(seed: u64, grouped: bool) -> (bool, f64, bool) {
    let mut r = rng(90_000 + seed);
    let n = r.gen_range(30..80);
    let data = random_dataset(&mut r, n, 7);
    let kernel = Kernel::ALL[(seed % 5) as usize];
    let spec = Smoothing::new(r.gen_range(0.2..0.8), r.gen_range(0.2..1.0), kernel).unwrap();
    let family = if grouped {
        smoothqr::PenaltyFamily::GroupLasso {
            groups: GroupStructure::from_sizes(vec![2, 1, 3]).unwrap(),
        }
    } else {
        smoothqr::PenaltyFamily::lasso()
    };
    let lmax = smoothqr::lambda_max(&data, &spec, &family).unwrap();
    let config = SolverConfig::default();
    let path = smoothqr::LambdaPath::new(vec![lmax, 0.9 * lmax]).unwrap();
    let fits = smoothqr::fit_path(&data, &spec, &family, &path, &config).unwrap();
    let at_max = &fits[0];
    assert_descent(at_max);
    assert_descent(&fits[1]);
    let zeros = at_max.beta[1..].iter().all(|b| *b == 0.0);
    let kkt = smoothqr::kkt_residual(&data, &at_max.beta, &spec, &family.at(lmax, 7)).unwrap();
    let moves = fits[1].beta[1..].iter().any(|b| *b != 0.0);
    (zeros, kkt, moves)
}

/// Additive data with two-level step components:
/// `y = 1 + Σ_j f_j(x_j) + ε`, `x_j ~ U(0, 1)`, `ε ~ N(0, 0.25)`.
pub struct StepData {
    pub y: Vec<f64>,
    pub columns: Vec<Vec<f64>>,
    /// Noise-free conditional median at each observation.
    pub truth: Vec<f64>,
}

pub fn step_data(seed: u64, n: usize) -> StepData {
    let levels = [(-1.0, 1.0, 0.3), (0.5, -0.5, 0.6), (0.0, 1.5, 0.5)];
    let mut r = rng(seed);
    let columns: Vec<Vec<f64>> = (0..levels.len())
        .map(|_| (0..n).map(|_| r.gen_range(0.0..1.0)).collect())
        .collect();
    let truth: Vec<f64> = (0..n)
        .map(|i| {
            1.0 + levels
                .iter()
                .zip(&columns)
                .map(|(&(lo, hi, cut), c)| if c[i] > cut { hi } else { lo })
                .sum::<f64>()
        })
        .collect();
    let y = truth.iter().map(|t| t + 0.5 * super::normal(&mut r)).collect();
    StepData { y, columns, truth }
}

/// Sum of check losses of `fitted` against `y`.
pub fn total_check_loss(y: &[f64], fitted: &[f64], tau: f64) -> f64 {
    y.iter().zip(fitted).map(|(a, b)| super::check(a - b, tau)).sum()
}
