mod common;

use common::integrate;
use smoothqr::simulation::{
    generate, run_replications, t_cdf, t_quantile, MethodSpec, SimDesign, HEAVY_TAILED_NOISE,
    NORMAL_NOISE,
};

/// Student-t distribution function by quadrature after `t = √ν tan θ`.
fn t_cdf_oracle(q: f64, df: f64) -> f64 {
    let f = |theta: f64| theta.cos().max(0.0).powf(df - 1.0);
    let half = std::f64::consts::FRAC_PI_2;
    let total = integrate(&f, 0.0, half, &[], 1e-15);
    let part = integrate(&f, 0.0, (q.abs() / df.sqrt()).atan(), &[], 1e-15);
    0.5 + 0.5 * q.signum() * part / total
}

#[test]
fn t_quantile_inverts_an_independent_cdf() {
    for df in [1.0, 1.5, 3.0, 7.5] {
        for tau in [0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
            let q = t_quantile(tau, df).unwrap();
            let oracle = t_cdf_oracle(q, df);
            assert!((oracle - tau).abs() <= 1e-10, "df {df} tau {tau}: {oracle}");
            assert!((t_cdf(q, df) - tau).abs() <= 1e-12);
        }
    }
    // bisection on the oracle alone
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf_oracle(mid, 1.5) < 0.7 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((t_quantile(0.7, 1.5).unwrap() - lo).abs() < 1e-9);
}

#[test]
fn ar1_covariance_is_realized() {
    let design = SimDesign::sparse(100_000, 20, NORMAL_NOISE, 0.5, 3);
    let (data, _) = generate(&design).unwrap();
    let x = data.design();
    let n = data.n() as f64;
    for j in 1..=5 {
        for k in 1..=5 {
            let mean_j: f64 = (0..data.n()).map(|i| x.get(i, j)).sum::<f64>() / n;
            let mean_k: f64 = (0..data.n()).map(|i| x.get(i, k)).sum::<f64>() / n;
            let cov: f64 = (0..data.n())
                .map(|i| (x.get(i, j) - mean_j) * (x.get(i, k) - mean_k))
                .sum::<f64>()
                / (n - 1.0);
            let target = 0.7f64.powi((j as i32 - k as i32).abs());
            assert!((cov - target).abs() <= 0.02, "({j},{k}): {cov} vs {target}");
        }
    }
}

#[test]
fn block_exchangeable_covariance_is_realized() {
    let design = SimDesign::grouped(40_000, 60, NORMAL_NOISE, 0.5, 4);
    let (data, _) = generate(&design).unwrap();
    let x = data.design();
    let n = data.n() as f64;
    let cov = |j: usize, k: usize| (0..data.n()).map(|i| x.get(i, j) * x.get(i, k)).sum::<f64>() / n;
    assert!((cov(1, 1) - 1.0).abs() < 0.03);
    assert!((cov(1, 5) - 0.6).abs() < 0.03);
    assert!(cov(5, 6).abs() < 0.03);
    assert!((cov(41, 42) - 0.6).abs() < 0.03);
}

#[test]
fn conditional_quantile_is_the_linear_predictor() {
    for (design, tau) in [
        (SimDesign::sparse(100_000, 20, NORMAL_NOISE, 0.3, 5), 0.3),
        (SimDesign::sparse(100_000, 20, HEAVY_TAILED_NOISE, 0.7, 6), 0.7),
        (SimDesign::grouped(100_000, 50, HEAVY_TAILED_NOISE, 0.5, 7), 0.5),
    ] {
        let (data, beta) = generate(&design).unwrap();
        let x = data.design();
        let below = (0..data.n())
            .filter(|&i| {
                let q: f64 = x.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum();
                data.y()[i] <= q
            })
            .count();
        let frac = below as f64 / data.n() as f64;
        assert!((frac - tau).abs() <= 0.01, "{frac} vs {tau}");
    }
}

#[test]
fn replications_are_reproducible() {
    let design = SimDesign::sparse(60, 20, HEAVY_TAILED_NOISE, 0.5, 0);
    let method = MethodSpec { folds: 5, nlambda: 10, ..Default::default() };
    let a = run_replications(&design, &method, 3, 99).unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_replications(&design, &method, 3, 99).unwrap());
    assert_eq!(a.l2_error, b.l2_error);
    assert_eq!(a.tpr, b.tpr);
    assert_eq!(a.fpr, b.fpr);
    let c = run_replications(&design, &method, 3, 100).unwrap();
    assert_ne!(a.l2_error, c.l2_error);
    let single = run_replications(&design, &method, 1, 99).unwrap();
    assert!(single.l2_error.se.is_none());
    assert_eq!(single.outcomes[0].metrics, a.outcomes[0].metrics);
}

#[test]
fn fitted_zeros_are_exact() {
    use smoothqr::{cross_validate, lambda_max, Kernel, LambdaPath, PenaltyFamily, Smoothing, SolverConfig};
    let design = SimDesign::sparse(100, 40, NORMAL_NOISE, 0.5, 0);
    let (data, _) = generate(&design).unwrap();
    let spec = Smoothing::new(0.5, 0.3, Kernel::Gaussian).unwrap();
    let family = PenaltyFamily::lasso();
    let lmax = lambda_max(&data, &spec, &family).unwrap();
    let path = LambdaPath::geometric(lmax, 0.05, 20).unwrap();
    let cv = cross_validate(&data, &spec, &family, &path, 5, 1, &SolverConfig::default()).unwrap();
    let tiny = cv.fit.beta.iter().filter(|b| b.abs() < 1e-10).count();
    let exact = cv.fit.beta.iter().filter(|b| **b == 0.0).count();
    assert!(exact > 0);
    assert_eq!(tiny, exact);
}

#[test]
fn group_methods_need_a_grouped_design() {
    let design = SimDesign::sparse(60, 20, NORMAL_NOISE, 0.5, 0);
    let method = MethodSpec::default().with_method(smoothqr::simulation::Method::GroupLasso);
    assert!(run_replications(&design, &method, 1, 1).is_err());
}
