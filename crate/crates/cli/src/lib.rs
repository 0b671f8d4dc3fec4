//! Command-line experiment runner for the risk-aware estimation toolkit.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use commands::{execute, Check, CommandKind, CommandOutput};
pub use config::{resolve, ExperimentConfig, Overrides, ResolvedRun};
pub use error::{CliError, CliResult, EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK, EXIT_RUNTIME};
pub use output::{fmt_g, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "sevtrade",
    version,
    about = "Risk-aware MMSE estimation experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan the mse/sev frontier over a grid of risk weights.
    Frontier(CommonArgs),
    /// Report hedgeable margins, their sandwich bounds and the product-gap bounds.
    Margin {
        #[command(flatten)]
        common: CommonArgs,
        /// Sweep a model parameter: name=lo:hi:count or name=v1,v2,...
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Skewness magnitude over a model parameter sweep.
    SkewSweep {
        #[command(flatten)]
        common: CommonArgs,
        /// name=lo:hi:count (linear) or name=v1,v2,...
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Check probe estimators against the frontier's product bound.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// mean | mix(w) | const(c) | affine(a,b) | opt(mu) | tanh(amp,rate); repeatable
        #[arg(long = "probe")]
        probes: Vec<String>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Config file of key = value lines under [section] headers.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    /// Model parameter key=value; repeatable.
    #[arg(long = "param")]
    pub params: Vec<String>,
    /// Number of sampled observations.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Log-spaced grid lo:hi:count; 0 and infinity are always included.
    #[arg(long)]
    pub mu_grid: Option<String>,
    #[arg(long)]
    pub rho_max: Option<f64>,
    #[arg(long)]
    pub rho_min: Option<f64>,
    /// Tail level for the spectral bound estimates.
    #[arg(long)]
    pub rho_quantile: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write gnuplot scripts next to the CSV files.
    #[arg(long)]
    pub gnuplot: bool,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Command {
    pub fn kind(&self) -> CommandKind {
        match self {
            Command::Frontier(_) => CommandKind::Frontier,
            Command::Margin { .. } => CommandKind::Margin,
            Command::SkewSweep { .. } => CommandKind::SkewSweep,
            Command::Verify { .. } => CommandKind::Verify,
        }
    }

    pub fn overrides(&self) -> Overrides {
        let (common, sweep, probes) = match self {
            Command::Frontier(c) => (c, None, Vec::new()),
            Command::Margin { common, sweep } | Command::SkewSweep { common, sweep } => {
                (common, sweep.clone(), Vec::new())
            }
            Command::Verify { common, probes } => (common, None, probes.clone()),
        };
        Overrides {
            config: common.config.clone(),
            model: common.model.clone(),
            params: common.params.clone(),
            samples: common.samples,
            seed: common.seed,
            mu_grid: common.mu_grid.clone(),
            rho_min: common.rho_min,
            rho_max: common.rho_max,
            rho_quantile: common.rho_quantile,
            out: common.out.clone(),
            gnuplot: common.gnuplot,
            threads: common.threads,
            sweep,
            probes,
        }
    }
}

/// What a finished run wrote and whether its invariant checks held.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub written: Vec<PathBuf>,
    pub checks: Vec<Check>,
    pub manifest_sha256: String,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.checks.iter().all(|c| c.pass) {
            EXIT_OK
        } else {
            EXIT_INVARIANT
        }
    }
}

#[derive(Serialize)]
struct Timing<'a> {
    manifest_sha256: &'a str,
    wall_time_seconds: f64,
    threads: usize,
}

/// Resolves the configuration, runs the command on the requested number of threads
/// and writes its outputs plus a separate `timing.json`.
pub fn run(kind: CommandKind, flags: &Overrides) -> CliResult<RunSummary> {
    let resolved = resolve(flags)?;
    let start = Instant::now();
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = resolved.threads {
            b = b.num_threads(n);
        }
        b.build()
            .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?
    };
    let threads = pool.current_num_threads();
    let out = pool.install(|| execute(kind, &resolved.config))?;
    let manifest = RunManifest::new(kind.name(), resolved.config.clone(), out.failures.clone());
    let hash = manifest.sha256()?;
    let mut files = out.files;
    files.push(output::OutputFile::json(
        "timing.json",
        &Timing {
            manifest_sha256: &hash,
            wall_time_seconds: start.elapsed().as_secs_f64(),
            threads,
        },
    )?);
    let written = output::write_all(&resolved.out_dir, &files, &manifest)?;
    for c in out.checks.iter().filter(|c| !c.pass) {
        log::error!("check failed: {} ({})", c.name, c.detail);
    }
    Ok(RunSummary {
        written,
        checks: out.checks,
        manifest_sha256: hash,
    })
}

/// Runs a parsed command line and returns the process exit code.
pub fn main_with(cli: &Cli) -> i32 {
    match run(cli.command.kind(), &cli.command.overrides()) {
        Ok(summary) => {
            for p in &summary.written {
                println!("{}", p.display());
            }
            summary.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
