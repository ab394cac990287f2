//! Subcommand execution.

use std::fs::File;
use std::io::BufWriter;

use log::info;
use serde::Serialize;
use smoothqr::flam::{fit_flam, flam_objective, sort_order, FlamConfig};
use smoothqr::simulation::{
    replication_data, run_replications, scaling_curve, MethodSpec, Metrics, ScalingPoint,
    SimDesign, Summary,
};
use smoothqr::{
    cross_validate, default_bandwidth, lambda_max, lamm_fit, Kernel, LambdaPath, PenaltyFamily,
    Smoothing, SolverConfig,
};

use crate::args::{
    method_spec, BenchArgs, Command, CvArgs, FitArgs, FlamArgs, LambdaArg, RunConfig,
    SimulateArgs, SmoothingArgs,
};
use crate::data::{ingest_csv, write_dataset, Ingested};
use crate::error::{CliError, Result};
use crate::output::{emit, Report, Row};

/// Runs the subcommand, inside a pool of `--threads` workers when given.
pub fn run(config: &RunConfig) -> Result<()> {
    match config.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(|| dispatch(&config.command)),
        None => dispatch(&config.command),
    }
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Fit(a) => emit(&fit(a)?, &a.output),
        Command::Cv(a) => emit(&cv(a)?, &a.output),
        Command::Flam(a) => emit(&flam(a)?, &a.output),
        Command::Simulate(a) => emit(&simulate(a)?, &a.output),
        Command::Bench(a) => emit(&bench(a)?, &a.output),
    }
}

fn smoothing(args: &SmoothingArgs, n: usize, p: usize) -> Result<Smoothing> {
    let h = match args.bandwidth {
        Some(h) => h,
        None => default_bandwidth(n, p, args.tau)?,
    };
    Ok(Smoothing::new(args.tau, h, args.kernel)?)
}

fn load(input: &crate::args::InputArgs) -> Result<Ingested> {
    let data = ingest_csv(&input.input, &input.response)?;
    info!(
        "read {} rows and {} covariates from {}",
        data.dataset.n(),
        data.covariates.len(),
        input.input.display()
    );
    Ok(data)
}

#[derive(Debug, Clone, Serialize)]
pub struct CvPath {
    pub lambdas: Vec<f64>,
    pub mean_loss: Vec<f64>,
    pub std_error: Vec<f64>,
    pub selected_index: usize,
    pub folds: usize,
    pub seed: u64,
}

/// Penalized fit at one λ; `cv` is filled when λ was cross-validated.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub command: &'static str,
    pub coefficients: Vec<f64>,
    pub names: Vec<String>,
    pub lambda: f64,
    pub tau: f64,
    pub h: f64,
    pub kernel: Kernel,
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    pub n: usize,
    pub penalty: PenaltyFamily,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvPath>,
}

impl Report for FitReport {
    fn rows(&self) -> Vec<Row> {
        let mut rows: Vec<Row> = self
            .names
            .iter()
            .zip(&self.coefficients)
            .map(|(name, b)| Row::new(name.as_str(), "coefficients", "estimate", *b))
            .collect();
        if let Some(cv) = &self.cv {
            for (k, &lambda) in cv.lambdas.iter().enumerate() {
                rows.push(Row::numeric(lambda, "cv", "mean_loss", cv.mean_loss[k]));
                rows.push(Row::numeric(lambda, "cv", "std_error", cv.std_error[k]));
            }
        }
        rows
    }
}

fn names(data: &Ingested) -> Vec<String> {
    std::iter::once("(intercept)".to_string())
        .chain(data.covariates.iter().cloned())
        .collect()
}

pub fn fit(args: &FitArgs) -> Result<FitReport> {
    let data = load(&args.input)?;
    let family = args.penalty.family(data.covariates.len())?;
    let spec = smoothing(&args.smoothing, data.dataset.n(), data.covariates.len())?;
    let lambda = match args.lambda {
        LambdaArg::Max => lambda_max(&data.dataset, &spec, &family)?,
        LambdaArg::Value(v) => v,
    };
    let penalty = family.at(lambda, data.dataset.dim());
    let warm = smoothqr::tuning::null_fit(&data.dataset, &spec);
    let result = lamm_fit(&data.dataset, &spec, &penalty, &SolverConfig::default(), Some(&warm))?;
    Ok(FitReport {
        command: "fit",
        names: names(&data),
        lambda,
        tau: spec.tau(),
        h: spec.bandwidth(),
        kernel: spec.kernel(),
        iterations: result.iterations,
        objective: result.objective(),
        converged: result.converged,
        n: data.dataset.n(),
        coefficients: result.beta,
        penalty: family,
        metrics: None,
        cv: None,
    })
}

pub fn cv(args: &CvArgs) -> Result<FitReport> {
    let data = load(&args.input)?;
    let family = args.penalty.family(data.covariates.len())?;
    let spec = smoothing(&args.smoothing, data.dataset.n(), data.covariates.len())?;
    let lmax = lambda_max(&data.dataset, &spec, &family)?;
    let path = LambdaPath::geometric(lmax, args.path.lambda_min_ratio, args.path.nlambda)?;
    let result = cross_validate(
        &data.dataset,
        &spec,
        &family,
        &path,
        args.path.folds,
        args.seed,
        &SolverConfig::default(),
    )?;
    Ok(FitReport {
        command: "cv",
        names: names(&data),
        lambda: result.selected_lambda,
        tau: spec.tau(),
        h: spec.bandwidth(),
        kernel: spec.kernel(),
        iterations: result.fit.iterations,
        objective: result.fit.objective(),
        converged: result.fit.converged,
        n: data.dataset.n(),
        coefficients: result.fit.beta,
        penalty: family,
        metrics: None,
        cv: Some(CvPath {
            lambdas: result.lambdas,
            mean_loss: result.mean_loss,
            std_error: result.std_error,
            selected_index: result.selected_index,
            folds: result.folds,
            seed: result.seed,
        }),
    })
}

/// One fitted component along its sorted covariate.
#[derive(Debug, Clone, Serialize)]
pub struct Component {
    pub name: String,
    pub x: Vec<f64>,
    pub fitted: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlamReport {
    pub command: &'static str,
    pub intercept: f64,
    /// Per-covariate step functions.
    pub coefficients: Vec<Component>,
    pub lambda: f64,
    pub tau: f64,
    pub h: f64,
    pub kernel: Kernel,
    /// Completed coordinate descent cycles.
    pub iterations: usize,
    pub objective: f64,
    pub n: usize,
}

impl Report for FlamReport {
    fn rows(&self) -> Vec<Row> {
        self.coefficients
            .iter()
            .flat_map(|c| {
                c.x.iter()
                    .zip(&c.fitted)
                    .map(|(x, f)| Row::numeric(*x, &c.name, "fitted", *f))
            })
            .collect()
    }
}

pub fn flam(args: &FlamArgs) -> Result<FlamReport> {
    let data = load(&args.input)?;
    let columns = data.columns();
    let y = data.dataset.y();
    let spec = smoothing(&args.smoothing, y.len(), columns.len())?;
    let config = FlamConfig {
        epsilon: args.epsilon,
        max_cycles: args.max_cycles,
        ..FlamConfig::default()
    };
    let fit = fit_flam(y, &columns, args.lambda, &spec, &config)?;
    let orders: Vec<Vec<usize>> = columns.iter().map(|c| sort_order(c)).collect();
    let objective = flam_objective(y, fit.theta0, &fit.theta, &orders, args.lambda, &spec);
    let coefficients = data
        .covariates
        .iter()
        .zip(fit.sorted_x.iter().zip(&fit.sorted_theta))
        .map(|(name, (x, t))| Component {
            name: name.clone(),
            x: x.clone(),
            fitted: t.clone(),
        })
        .collect();
    Ok(FlamReport {
        command: "flam",
        intercept: fit.theta0,
        coefficients,
        lambda: args.lambda,
        tau: spec.tau(),
        h: spec.bandwidth(),
        kernel: spec.kernel(),
        iterations: fit.cycles,
        objective,
        n: y.len(),
    })
}

/// Replication results without timings, so that reruns are identical.
#[derive(Debug, Clone, Serialize)]
pub struct Replication {
    pub metrics: Metrics,
    pub lambda: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationMetrics {
    pub l2_error: Summary,
    pub tpr: Option<Summary>,
    pub fpr: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_tpr: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_fpr: Option<Summary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub command: &'static str,
    pub design: SimDesign,
    pub method: MethodSpec,
    pub reps: usize,
    pub tau: f64,
    pub kernel: Kernel,
    pub metrics: SimulationMetrics,
    pub replications: Vec<Replication>,
}

impl Report for SimulateReport {
    fn rows(&self) -> Vec<Row> {
        let mut rows = Vec::new();
        for (r, rep) in self.replications.iter().enumerate() {
            let key = r.to_string();
            let m = &rep.metrics;
            rows.push(Row::new(key.as_str(), "replication", "l2_error", m.l2_error));
            let rates = [
                ("tpr", m.tpr),
                ("fpr", m.fpr),
                ("group_tpr", m.group_tpr),
                ("group_fpr", m.group_fpr),
            ];
            for (metric, v) in rates {
                if let Some(v) = v {
                    rows.push(Row::new(key.as_str(), "replication", metric, v));
                }
            }
            rows.push(Row::new(key.as_str(), "replication", "lambda", rep.lambda));
        }
        let m = &self.metrics;
        let summaries = [
            ("l2_error", Some(m.l2_error)),
            ("tpr", m.tpr),
            ("fpr", m.fpr),
            ("group_tpr", m.group_tpr),
            ("group_fpr", m.group_fpr),
        ];
        for (metric, s) in summaries {
            if let Some(s) = s {
                rows.push(Row::new("mean", "summary", metric, s.mean));
                if let Some(se) = s.se {
                    rows.push(Row::new("se", "summary", metric, se));
                }
            }
        }
        rows
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<SimulateReport> {
    let method = method_spec(&args.smoothing, &args.penalty, &args.path)?;
    let design = args.design();
    design.validate()?;
    if let Some(path) = &args.save_data {
        let (dataset, _, _) = replication_data(&design, 0)?;
        let data = Ingested {
            dataset,
            response: "y".to_string(),
            covariates: (1..=design.p).map(|j| format!("x{j}")).collect(),
        };
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        write_dataset(BufWriter::new(file), &data)?;
    }
    let summary = run_replications(&design, &method, args.reps, args.seed)?;
    Ok(SimulateReport {
        command: "simulate",
        design: summary.design,
        method,
        reps: summary.reps,
        tau: design.tau,
        kernel: method.kernel,
        metrics: SimulationMetrics {
            l2_error: summary.l2_error,
            tpr: summary.tpr,
            fpr: summary.fpr,
            group_tpr: summary.group_tpr,
            group_fpr: summary.group_fpr,
        },
        replications: summary
            .outcomes
            .into_iter()
            .map(|o| Replication {
                metrics: o.metrics,
                lambda: o.selected_lambda,
                h: o.bandwidth,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub command: &'static str,
    pub series: String,
    pub method: MethodSpec,
    pub tau: f64,
    pub reps: usize,
    pub points: Vec<ScalingPoint>,
}

impl Report for BenchReport {
    fn rows(&self) -> Vec<Row> {
        let mut rows = Vec::with_capacity(2 * self.points.len());
        for metric in ["l2_error", "seconds"] {
            for pt in &self.points {
                let value = match metric {
                    "l2_error" => pt.l2_error.mean,
                    _ => pt.seconds.mean,
                };
                rows.push(Row::new(pt.p.to_string(), &self.series, metric, value));
            }
        }
        rows
    }
}

pub fn bench(args: &BenchArgs) -> Result<BenchReport> {
    let method = method_spec(&args.smoothing, &args.penalty, &args.path)?;
    let points = scaling_curve(
        &args.dims.0,
        args.noise.noise(),
        args.smoothing.tau,
        &method,
        args.reps,
        args.seed,
    )?;
    Ok(BenchReport {
        command: "bench",
        series: args.penalty.penalty.label().to_string(),
        method,
        tau: args.smoothing.tau,
        reps: args.reps,
        points,
    })
}
