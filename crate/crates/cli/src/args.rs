//! Command-line arguments.

use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use smoothqr::flam::FlamConfig;
use smoothqr::simulation::{Method, MethodSpec, Noise, SimDesign, HEAVY_TAILED_NOISE, NORMAL_NOISE};
use smoothqr::tuning::{DEFAULT_FOLDS, DEFAULT_MIN_RATIO, DEFAULT_PATH_LENGTH};
use smoothqr::{GroupStructure, Kernel, PenaltyFamily, SolverConfig};

use crate::error::{CliError, Result};

/// A full invocation: global flags plus one subcommand.
#[derive(Debug, Clone, Parser)]
#[command(name = "smoothqr", version, about = "Penalized convolution-smoothed quantile regression")]
pub struct RunConfig {
    /// Worker threads for folds and replications (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Fit at a single lambda.
    Fit(FitArgs),
    /// Cross-validate a lambda path and refit at the selected value.
    Cv(CvArgs),
    /// Fused-lasso additive quantile model.
    Flam(FlamArgs),
    /// Replicated cross-validated fits on a simulation design.
    Simulate(SimulateArgs),
    /// Estimation error and time against p, with n = 2p.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// CSV file with a header row.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Name of the response column.
    #[arg(long, default_value = "y")]
    pub response: String,
}

#[derive(Debug, Clone, Args)]
pub struct SmoothingArgs {
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, default_value = "gaussian", value_parser = parse_kernel)]
    pub kernel: Kernel,
    /// Fixed bandwidth instead of the default rule.
    #[arg(long)]
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyName {
    Lasso,
    ElasticNet,
    GroupLasso,
    SparseGroupLasso,
}

impl PenaltyName {
    pub fn label(self) -> &'static str {
        match self {
            PenaltyName::Lasso => "lasso",
            PenaltyName::ElasticNet => "elastic-net",
            PenaltyName::GroupLasso => "group-lasso",
            PenaltyName::SparseGroupLasso => "sparse-group-lasso",
        }
    }

    fn is_grouped(self) -> bool {
        matches!(self, PenaltyName::GroupLasso | PenaltyName::SparseGroupLasso)
    }
}

#[derive(Debug, Clone, Args)]
pub struct PenaltyArgs {
    #[arg(long, value_enum, default_value = "lasso")]
    pub penalty: PenaltyName,
    /// L1 share of the elastic net, in [0, 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma-separated group sizes covering the covariates in header order.
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<usize>>,
}

impl PenaltyArgs {
    fn check(&self) -> Result<()> {
        match self.penalty {
            PenaltyName::ElasticNet if self.alpha.is_none() => {
                return Err(conflict("--penalty elastic-net needs --alpha"))
            }
            PenaltyName::ElasticNet => {}
            _ if self.alpha.is_some() => {
                return Err(conflict("--alpha only applies to --penalty elastic-net"))
            }
            _ => {}
        }
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(conflict(format!("--alpha must lie in [0, 1], got {a}")));
            }
        }
        match (self.penalty.is_grouped(), &self.groups) {
            (true, None) => Err(conflict(format!(
                "--penalty {} needs --groups",
                self.penalty.label()
            ))),
            (false, Some(_)) => Err(conflict("--groups only applies to group penalties")),
            _ => Ok(()),
        }
    }

    /// Penalty family for a design with `covariates` non-intercept columns.
    pub fn family(&self, covariates: usize) -> Result<PenaltyFamily> {
        self.check()?;
        let groups = || -> Result<GroupStructure> {
            let sizes = self.groups.clone().unwrap_or_default();
            let covered: usize = sizes.iter().sum();
            if covered != covariates {
                return Err(conflict(format!(
                    "--groups cover {covered} covariates but the data has {covariates}"
                )));
            }
            Ok(GroupStructure::from_sizes(sizes)?)
        };
        Ok(match self.penalty {
            PenaltyName::Lasso => PenaltyFamily::lasso(),
            PenaltyName::ElasticNet => PenaltyFamily::ElasticNet {
                alpha: self.alpha.expect("checked"),
            },
            PenaltyName::GroupLasso => PenaltyFamily::GroupLasso { groups: groups()? },
            PenaltyName::SparseGroupLasso => PenaltyFamily::SparseGroupLasso {
                groups: groups()?,
                prox: Default::default(),
            },
        })
    }

    /// Simulation method; groups come from the design.
    pub fn method(&self) -> Result<Method> {
        if self.groups.is_some() {
            return Err(conflict("--groups is set by the simulation design"));
        }
        let probe = PenaltyArgs {
            groups: self.penalty.is_grouped().then(Vec::new),
            ..self.clone()
        };
        probe.check()?;
        Ok(match self.penalty {
            PenaltyName::Lasso => Method::Lasso,
            PenaltyName::ElasticNet => Method::ElasticNet {
                alpha: self.alpha.expect("checked"),
            },
            PenaltyName::GroupLasso => Method::GroupLasso,
            PenaltyName::SparseGroupLasso => Method::SparseGroupLasso,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct PathArgs {
    #[arg(long, default_value_t = DEFAULT_PATH_LENGTH)]
    pub nlambda: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_RATIO)]
    pub lambda_min_ratio: f64,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file (default: standard output).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

/// A single λ, or `max` for the smallest λ that zeroes every covariate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaArg {
    Max,
    Value(f64),
}

fn parse_lambda(s: &str) -> std::result::Result<LambdaArg, String> {
    if s.eq_ignore_ascii_case("max") {
        return Ok(LambdaArg::Max);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(LambdaArg::Value(v)),
        _ => Err(format!("expected a non-negative number or \"max\", got {s:?}")),
    }
}

fn parse_kernel(s: &str) -> std::result::Result<Kernel, String> {
    Kernel::ALL
        .into_iter()
        .find(|k| k.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| {
            let names: Vec<_> = Kernel::ALL.iter().map(|k| k.name()).collect();
            format!("unknown kernel {s:?}; expected one of {}", names.join(", "))
        })
}

/// Comma-separated covariate counts; an empty list is allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims(pub Vec<usize>);

fn parse_dims(s: &str) -> std::result::Result<Dims, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|_| format!("not a dimension: {t:?}")))
        .collect::<std::result::Result<_, _>>()
        .map(Dims)
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub smoothing: SmoothingArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[arg(long, value_parser = parse_lambda)]
    pub lambda: LambdaArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub smoothing: SmoothingArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub path: PathArgs,
    /// Seed of the fold permutation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FlamArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub smoothing: SmoothingArgs,
    #[arg(long)]
    pub lambda: f64,
    /// Stop once a full cycle changes the components by at most this much.
    #[arg(long, default_value_t = FlamConfig::default().epsilon)]
    pub epsilon: f64,
    #[arg(long, default_value_t = FlamConfig::default().max_cycles)]
    pub max_cycles: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignName {
    Sparse,
    Dense,
    Grouped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseName {
    /// N(0, 2).
    Normal,
    /// Student t with 1.5 degrees of freedom.
    T,
}

impl NoiseName {
    pub fn noise(self) -> Noise {
        match self {
            NoiseName::Normal => NORMAL_NOISE,
            NoiseName::T => HEAVY_TAILED_NOISE,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "sparse")]
    pub design: DesignName,
    #[arg(long, value_enum, default_value = "normal")]
    pub noise: NoiseName,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 250)]
    pub p: usize,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub smoothing: SmoothingArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub path: PathArgs,
    /// Also write the first replication's data as CSV.
    #[arg(long)]
    pub save_data: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl SimulateArgs {
    pub fn design(&self) -> SimDesign {
        let (n, p, noise, tau, seed) = (self.n, self.p, self.noise.noise(), self.smoothing.tau, self.seed);
        match self.design {
            DesignName::Sparse => SimDesign::sparse(n, p, noise, tau, seed),
            DesignName::Dense => SimDesign::dense(n, p, noise, tau, seed),
            DesignName::Grouped => SimDesign::grouped(n, p, noise, tau, seed),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Comma-separated covariate counts; n = 2p at each.
    #[arg(long, default_value = "100,200,400", value_parser = parse_dims)]
    pub dims: Dims,
    #[arg(long, value_enum, default_value = "normal")]
    pub noise: NoiseName,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub smoothing: SmoothingArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub path: PathArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Cross-validation settings shared by `simulate` and `bench`.
pub fn method_spec(smoothing: &SmoothingArgs, penalty: &PenaltyArgs, path: &PathArgs) -> Result<MethodSpec> {
    Ok(MethodSpec {
        method: penalty.method()?,
        kernel: smoothing.kernel,
        bandwidth: smoothing.bandwidth,
        folds: path.folds,
        nlambda: path.nlambda,
        lambda_min_ratio: path.lambda_min_ratio,
        solver: SolverConfig::default(),
    })
}

fn conflict(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}
