//! Command-line front end: `demo`, `solve` and `selftest`.
//!
//! Exit codes: 0 success, 1 numerical or solver failure, 2 usage or
//! configuration error.

mod demo;
pub mod output;
mod solve;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::ConfigError;
use crate::error::ChaosError;
use crate::selftest::{self, Level, Options};
use output::{Cell, Format, Meta, Table};

pub use demo::DemoName;
pub use solve::Problem;

pub const GIT_DESCRIBE: &str = env!("WICKCHAOS_GIT_DESCRIBE");

#[derive(Debug, Parser)]
#[command(name = "wickchaos", version = concat!(env!("CARGO_PKG_VERSION"), " (", env!("WICKCHAOS_GIT_DESCRIBE"), ")"))]
#[command(about = "Wiener chaos, Wick/Malliavin calculus and BSDE/BSVIE solvers")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Problem file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// RNG seed; 1 for demo/solve, the suite default for selftest.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Monte Carlo paths.
    #[arg(long, global = true, value_name = "N")]
    pub paths: Option<usize>,
    /// Output directory; stdout when absent.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Number of θ variables in the Brownian expansion.
    #[arg(long, global = true, value_name = "K")]
    pub k: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Numerical check of a named identity.
    Demo {
        #[arg(value_enum)]
        name: DemoName,
    },
    /// Solve the problem described by --config.
    Solve {
        #[arg(value_enum)]
        problem: Problem,
    },
    /// Run the acceptance criteria.
    Selftest {
        #[arg(long, conflicts_with = "full")]
        quick: bool,
        #[arg(long)]
        full: bool,
        /// Comma-separated criterion numbers.
        #[arg(long, value_delimiter = ',', value_name = "IDS")]
        only: Vec<usize>,
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Solver(#[from] ChaosError),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) | Self::Io(_) => 2,
            Self::Solver(_) | Self::Failed(_) => 1,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    if g.paths == Some(0) {
        return Err(CliError::Usage("--paths must be positive".into()));
    }
    if g.k == Some(0) {
        return Err(CliError::Usage("--k must be positive".into()));
    }
    let mut meta = Meta::default();
    match &cli.command {
        Command::Demo { name } => {
            let seed = g.seed.unwrap_or(1);
            meta.set("command", format!("demo {}", name.label()));
            meta.set("seed", seed);
            let (tables, failures) = demo::run(*name, seed, g.paths, g.k, &mut meta)?;
            finish(&meta, &tables, g)?;
            if !failures.is_empty() {
                return Err(CliError::Failed(format!("identity check failed: {}", failures.join(", "))));
            }
            Ok(())
        }
        Command::Solve { problem } => {
            let path = g.config.as_ref().ok_or_else(|| CliError::Usage("solve needs --config PATH".into()))?;
            let cfg = crate::config::ProblemConfig::load(path)?;
            let seed = g.seed.unwrap_or(1);
            meta.set("command", format!("solve {}", problem.label()));
            meta.set("seed", seed);
            meta.set("grid", format!("T={} M={}", cfg.grid.horizon, cfg.grid.steps));
            match solve::run(*problem, &cfg, seed, g.paths, g.k, &mut meta) {
                Ok((tables, failure)) => {
                    finish(&meta, &tables, g)?;
                    match failure {
                        Some(f) => Err(CliError::Failed(f)),
                        None => Ok(()),
                    }
                }
                Err(CliError::Solver(e)) => {
                    let mut t = Table::new("error", &["kind", "message"]);
                    t.push(vec![error_kind(&e).into(), e.to_string().into()]);
                    finish(&meta, &[t], g)?;
                    Err(CliError::Solver(e))
                }
                Err(e) => Err(e),
            }
        }
        Command::Selftest { quick, full: _, only, corrupt } => {
            let mut opts = Options {
                level: if *quick { Level::Quick } else { Level::Full },
                corrupt: *corrupt,
                ..Options::default()
            };
            if let Some(s) = g.seed {
                opts.seed = s;
            }
            let names = selftest::criterion_names();
            if let Some(bad) = only.iter().find(|&&i| !names.iter().any(|(id, _)| *id == i)) {
                return Err(CliError::Usage(format!("no criterion {bad}; valid ids are 1..={}", names.len())));
            }
            let results: Vec<_> = if only.is_empty() {
                selftest::run_all(&opts)
            } else {
                only.iter().map(|&i| selftest::run_criterion(i, &opts)).collect()
            };
            for r in &results {
                println!("{}", r.line());
            }
            if let Some(dir) = &g.out {
                std::fs::create_dir_all(dir)?;
                let doc = serde_json::json!({
                    "meta": { "command": "selftest", "seed": opts.seed, "level": opts.level, "git_describe": GIT_DESCRIBE },
                    "criteria": results,
                });
                std::fs::write(dir.join("acceptance.json"), output::pretty(&doc))?;
            }
            let failed: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.name).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Failed(format!("failing criteria: {}", failed.join(", "))))
            }
        }
    }
}

fn finish(meta: &Meta, tables: &[Table], g: &Global) -> Result<(), CliError> {
    let mut meta = meta.clone();
    meta.set("git_describe", GIT_DESCRIBE);
    output::emit(&meta, tables, g.format, g.out.as_deref())?;
    Ok(())
}

fn error_kind(e: &ChaosError) -> &'static str {
    match e {
        ChaosError::Overflow(_) | ChaosError::OrderOverflow { .. } | ChaosError::VariableOverflow { .. } => "overflow",
        ChaosError::TruncationMismatch(_) => "truncation-mismatch",
        ChaosError::BasisInsufficient { .. } => "basis-insufficient",
        ChaosError::InvalidArgument(_) => "invalid-argument",
        ChaosError::Domain(_) => "domain",
        ChaosError::RankDeficient(_) => "rank-deficient",
        ChaosError::IntervalTooLong { .. } => "interval-too-long",
        ChaosError::Unsupported(_) => "unsupported",
        ChaosError::Infeasible(_) => "infeasible",
    }
}

/// `(name, value)` row helper for summary tables.
fn summary_row(name: &str, v: impl Into<Cell>) -> Vec<Cell> {
    vec![name.into(), v.into()]
}
