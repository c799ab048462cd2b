//! `evmono`: eventual monotonicity analysis from the command line.
//!
//! Exit codes: 0 when a verdict is produced (including falsified), 1 for
//! usage errors, 2 for numerical failures.

mod commands;
mod config;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "evmono", version, about = "Eventual monotonicity certificates for ODE models")]
pub struct Cli {
    /// Directory for reports, dumps and run_config.json.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads; changes wall time only.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Relative integrator tolerance.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub rtol: f64,
    /// Absolute integrator tolerance.
    #[arg(long, global = true, default_value_t = 1e-12)]
    pub atol: f64,
    /// Relative tolerance for eigenvalue realness and simplicity.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub eig_tol: f64,
    /// Value of the `eps` parameter for trajectory-based stages; the
    /// equilibrium is still found with the model's own value.
    #[arg(long, global = true)]
    pub epsilon_override: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Eventual positivity of ẋ = Ax for a matrix file or builtin linear model.
    LinearCheck {
        matrix: String,
        /// Scan horizon; defaults to 50/|λ₁|.
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, default_value_t = evmono::linear::DEFAULT_SAMPLES)]
        samples: usize,
        /// Also build S with S⁻¹AS eventually positive.
        #[arg(long)]
        positivize: bool,
    },
    /// Refine an equilibrium and report its Jacobian spectrum.
    Equilibrium {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Dominant eigenfunction s₁ on a grid.
    Eigenfunction {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        laplace: LaplaceArgs,
        /// `lo:hi` per axis, comma separated; defaults to the model window.
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
        /// Nodes per axis, comma separated, or one count for every axis.
        #[arg(long, default_value = "21")]
        grid: String,
        #[arg(long)]
        gradients: bool,
    },
    /// Isostable polylines on a 2D cross-section.
    Isostables {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        laplace: LaplaceArgs,
        /// Comma-separated levels, or `auto:N`.
        #[arg(long, default_value = "auto:10")]
        levels: String,
        /// Fixed coordinates `name_or_index=v,...`; exactly two states stay free.
        #[arg(long, allow_hyphen_values = true)]
        cross_section: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
        #[arg(long, default_value = "41")]
        grid: String,
    },
    /// Strong eventual monotonicity certificate.
    Certify {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        laplace: LaplaceArgs,
        #[command(flatten)]
        cone: ConeArgs,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1e-6)]
        margin: f64,
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
        /// Cross-section used by the comparability scan when n > 2.
        #[arg(long, allow_hyphen_values = true)]
        cross_section: Option<String>,
        /// Nodes per axis of the comparability grid.
        #[arg(long, default_value_t = 31)]
        scan_grid: usize,
        /// Isostable levels of the comparability scan.
        #[arg(long, default_value_t = 20)]
        scan_levels: usize,
    },
    /// Simulate ordered pairs and look for order reversals.
    OrderProbe {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        cone: ConeArgs,
        #[arg(long, default_value_t = 50)]
        pairs: usize,
        /// Defaults to the Laplace horizon at the equilibrium.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
    },
    /// Exact Schur complement onto the slow coordinates.
    Reduce {
        matrix: PathBuf,
        /// 1-based fast indices, comma separated.
        #[arg(long)]
        fast: String,
    },
    /// Builtin models with dimension and parameter count.
    ListModels,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Builtin model name or path to a JSON model file.
    pub model: String,
    /// Parameter override `name=value`; repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Newton starting point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub guess: Option<String>,
    /// Registered equilibrium to start from.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct LaplaceArgs {
    /// Laplace horizon; defaults to max(10/|λ₁|, 10/gap).
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, value_enum, default_value_t = Method::Terminal)]
    pub method: Method,
    /// Growth factor between checkpoints that flags divergence.
    #[arg(long, default_value_t = 10.0)]
    pub divergence_factor: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Terminal,
    Average,
}

#[derive(Args, Debug, Clone)]
pub struct ConeArgs {
    /// Orthant signature, e.g. `-1,1,1`.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "cone_file")]
    pub cone: Option<String>,
    /// JSON cone: orthant_signature, polyhedral_generated or transformed_lorentz.
    #[arg(long)]
    pub cone_file: Option<PathBuf>,
}

/// A failed run: exit code, stage and message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub stage: String,
    pub msg: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure { code: 1, stage: "usage".into(), msg: msg.into() }
    }

    pub fn numeric(stage: &str, err: impl std::fmt::Display) -> Self {
        Failure { code: 2, stage: stage.into(), msg: err.to_string() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Failure { code: 2, stage: "output".into(), msg: msg.into() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: usage: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: usage: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}: {}", f.stage, f.msg);
            ExitCode::from(f.code)
        }
    }
}
