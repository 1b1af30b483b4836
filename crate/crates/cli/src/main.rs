//! Command-line interface: synthetic data generation, variable selection,
//! experiment sweeps, length-scale inspection and raw estimator values.
//!
//! Exit codes: 0 success, 1 input error (files, shapes, flags), 2
//! numerical failure during a run.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;

use config::{KernelHeuristic, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    ModelSelection,
    CvAggregation,
    MmdBaseline,
    LogisticBaseline,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::ModelSelection => "model-selection",
            Method::CvAggregation => "cv-aggregation",
            Method::MmdBaseline => "mmd-baseline",
            Method::LogisticBaseline => "logistic-baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum HeaderMode {
    /// Treat the first line as a header exactly when it does not parse as numbers.
    #[default]
    Auto,
    Yes,
    No,
}

#[derive(Parser)]
#[command(
    name = "mmdvs",
    about = "Variable selection for two-sample comparison via regularised MMD optimisation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct CommonOverrides {
    /// Master seed; every random stream of a run derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config file with flat dotted keys; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Length-scale heuristic.
    #[arg(long = "kernel-heuristic", value_enum)]
    kernel_heuristic: Option<KernelHeuristic>,
    /// MMD estimator backing the objective.
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    /// Data term of the regularised objective.
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// Aggregation variant for cv-aggregation.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Quadratic,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Ratio,
    Mmd,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset: X.csv, Y.csv, truth.json.
    Synth {
        /// Setting name (shifted_means, wider_variances, narrower_variances,
        /// laplace, correlated_gaussian, redundant_dirac, highdim_scalemix,
        /// h0_gaussian).
        #[arg(long)]
        setting: String,
        #[arg(long, default_value_t = 20)]
        dim: usize,
        /// Fraction of ground-truth variables.
        #[arg(long, default_value_t = 0.1)]
        rho: f64,
        /// Rows per dataset.
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Select the variables responsible for the discrepancy between two datasets.
    Select {
        /// CSV with samples from the first distribution.
        #[arg(long)]
        x: PathBuf,
        /// CSV with samples from the second distribution.
        #[arg(long)]
        y: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long, value_enum, default_value_t = HeaderMode::Auto)]
        header: HeaderMode,
        /// Output JSON path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: CommonOverrides,
    },
    /// Run seeded repetitions of synthetic settings across methods and
    /// summarise precision/recall/F.
    Experiment {
        /// Comma-separated setting names.
        #[arg(long, value_delimiter = ',')]
        settings: Vec<String>,
        /// Comma-separated methods.
        #[arg(long, value_enum, value_delimiter = ',')]
        methods: Vec<Method>,
        /// Repetitions per (setting, method, n) cell.
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 20)]
        dim: usize,
        #[arg(long, default_value_t = 0.1)]
        rho: f64,
        /// Comma-separated sample sizes (one cell per size).
        #[arg(long, value_delimiter = ',', default_value = "200")]
        n: Vec<usize>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: CommonOverrides,
    },
    /// Print the per-variable kernel length scales for a dataset pair.
    Lengthscales {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, value_enum, default_value_t = HeaderMode::Auto)]
        header: HeaderMode,
        #[arg(long = "kernel-heuristic", value_enum, default_value_t = KernelHeuristic::Median)]
        kernel_heuristic: KernelHeuristic,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the MMD estimate, its variance estimate and the objective
    /// value for given ARD weights.
    Mmd {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, value_enum, default_value_t = HeaderMode::Auto)]
        header: HeaderMode,
        /// Comma-separated ARD weights (default: all ones).
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: CommonOverrides,
    },
}

impl CommonOverrides {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(h) = self.kernel_heuristic {
            cfg.kernel_heuristic = h;
        }
        if let Some(est) = self.estimator {
            cfg.estimator = match est {
                EstimatorArg::Quadratic => mmdvs_core::Estimator::Quadratic,
                EstimatorArg::Linear => mmdvs_core::Estimator::Linear,
            };
        }
        if let Some(obj) = self.objective {
            cfg.objective_kind = match obj {
                ObjectiveArg::Ratio => mmdvs_core::ObjectiveKind::Ratio,
                ObjectiveArg::Mmd => mmdvs_core::ObjectiveKind::MmdOnly,
            };
        }
        if let Some(v) = &self.variant {
            cfg.variant = v.parse::<mmdvs_core::AggregationVariant>()?;
        }
        Ok(cfg)
    }
}

fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<mmdvs_core::Error>() {
            return if core.is_input_error() { 1 } else { 2 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some()
            || cause.downcast_ref::<serde_json::Error>().is_some()
        {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth { setting, dim, rho, n, seed, out } => {
            commands::synth(&setting, dim, rho, n, seed, &out)
        }
        Command::Select { x, y, method, header, out, overrides } => overrides
            .resolve()
            .and_then(|cfg| commands::select(&x, &y, method, header, out.as_deref(), &cfg)),
        Command::Experiment { settings, methods, reps, dim, rho, n, jobs, out, overrides } => {
            overrides.resolve().and_then(|cfg| {
                commands::experiment(
                    &settings,
                    &methods,
                    reps,
                    dim,
                    rho,
                    &n,
                    jobs,
                    out.as_deref(),
                    &cfg,
                )
            })
        }
        Command::Lengthscales { x, y, header, kernel_heuristic, out } => {
            commands::lengthscales(&x, &y, header, kernel_heuristic, out.as_deref())
        }
        Command::Mmd { x, y, header, weights, out, overrides } => overrides
            .resolve()
            .and_then(|cfg| commands::mmd_values(&x, &y, header, weights.as_deref(), out.as_deref(), &cfg)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}
