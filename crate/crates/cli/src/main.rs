//! `aqt`: seeded experiment runner.
//!
//! Exit codes: 0 success, 1 invalid configuration or runtime failure,
//! 2 a result outside its tolerance.

mod commands;
mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use aqt_core::analytic::AlgKind;
use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid configuration: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "aqt",
    version,
    about = "Amplified quantum transform experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
struct CommonArgs {
    /// JSON config file; flags override its fields.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Exponent of N = 2^EXP.
    #[arg(long = "n", value_name = "EXP")]
    n_exp: Option<u32>,
    #[arg(long)]
    s: Option<u64>,
    #[arg(long)]
    period: Option<u64>,
    #[arg(long)]
    m: Option<u64>,
    /// Error rate of the noise stream.
    #[arg(long, value_name = "RATE")]
    p: Option<f64>,
    #[arg(long, value_name = "K")]
    trials: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Write recovery traces as JSON lines.
    #[arg(long)]
    trace: bool,
    /// Algorithms, comma separated: amplified-qft, qft, qhs.
    #[arg(long = "alg", value_delimiter = ',')]
    algorithm: Vec<AlgKind>,
    #[arg(long)]
    max_retries: Option<u64>,
    /// Error-set size for `moments`.
    #[arg(long = "l")]
    l: Option<u64>,
    #[arg(long)]
    l_max: Option<u64>,
    #[arg(long)]
    l_step: Option<u64>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let flags = ExperimentConfig {
            n_exp: self.n_exp,
            s: self.s,
            period: self.period,
            m: self.m,
            p: self.p,
            trials: self.trials,
            seed: self.seed,
            algorithm: (!self.algorithm.is_empty()).then(|| self.algorithm.clone()),
            output_dir: self.out.clone(),
            max_retries: self.max_retries,
            l: self.l,
            l_max: self.l_max,
            l_step: self.l_step,
            trace: self.trace.then_some(true),
        };
        Ok(base.overridden_by(flags))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Analytic vs simulated probability tables.
    Simulate(CommonArgs),
    /// Repeat-until-success period recovery and offset search.
    Recover(CommonArgs),
    /// Error-stream trials with per-trial table checks.
    ErrorStream(CommonArgs),
    /// Empirical MinL bound curve.
    MinlSweep(CommonArgs),
    /// Random phase-sum moments against the closed forms.
    Moments(CommonArgs),
    /// Haar decision success rate.
    Haar {
        #[command(flatten)]
        common: CommonArgs,
        /// Balanced instead of constant signal on each pair.
        #[arg(long)]
        balanced: bool,
        /// Full Haar transform instead of one step.
        #[arg(long)]
        full: bool,
    },
    /// Support sizes against the uncertainty bound.
    Uncertainty(CommonArgs),
}

fn run(cli: Cli) -> Result<(ExperimentConfig, commands::Report), CliError> {
    Ok(match cli.command {
        Command::Simulate(a) => {
            let cfg = a.resolve()?;
            let r = commands::simulate(&cfg)?;
            (cfg, r)
        }
        Command::Recover(a) => {
            let cfg = a.resolve()?;
            let r = commands::recover(&cfg)?;
            (cfg, r)
        }
        Command::ErrorStream(a) => {
            let cfg = a.resolve()?;
            let r = commands::error_stream(&cfg)?;
            (cfg, r)
        }
        Command::MinlSweep(a) => {
            let cfg = a.resolve()?;
            let r = commands::minl_sweep(&cfg)?;
            (cfg, r)
        }
        Command::Moments(a) => {
            let cfg = a.resolve()?;
            let r = commands::moments(&cfg)?;
            (cfg, r)
        }
        Command::Haar {
            common,
            balanced,
            full,
        } => {
            let cfg = common.resolve()?;
            let r = commands::haar(&cfg, balanced, full)?;
            (cfg, r)
        }
        Command::Uncertainty(a) => {
            let cfg = a.resolve()?;
            let r = commands::uncertainty(&cfg)?;
            (cfg, r)
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cfg, report) = match run(cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    let dir = cfg.output_dir();
    if let Err(e) = fs::create_dir_all(&dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return ExitCode::from(1);
    }
    for (name, bytes) in &report.files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, bytes) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(1);
        }
    }
    println!("{}", report.summary);
    match report.breach {
        Some(msg) => {
            eprintln!("tolerance breach: {msg}");
            ExitCode::from(2)
        }
        None => ExitCode::SUCCESS,
    }
}
