//! `vsi`: spin levels, ODMR maps, pumping transients, pulse-sequence runs,
//! synthetic datasets and curve fits as CSV or JSON.

mod cmd;
mod config;
mod output;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use vsi_core::fit::FitError;
use vsi_core::seq::SeqError;

pub use output::Format;

/// Input or argument that could not be understood; exits with code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "vsi", version, about = "Silicon-vacancy spin simulations and fits")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Global {
    /// Output format
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write the result here instead of stdout
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// TOML file with defaults; command-line flags win
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed [default: 42]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Energy levels and transition branches against B parallel to c
    Levels(cmd::levels::LevelsArgs),
    /// ODMR spectrum map over field and frequency
    Map(cmd::map::MapArgs),
    /// Compile and simulate a sequence file or built-in template
    Run(cmd::run::RunArgs),
    /// Synthetic dataset from a decay model
    Synth(cmd::synth::SynthArgs),
    /// Optical pumping transient of the five-level model
    Pump(cmd::pump::PumpArgs),
    /// Fit a decay model to x,y[,sigma] data
    Fit(cmd::fit::FitArgs),
}

/// Settings shared by every subcommand after merging flags over the config.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub format: Format,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("VSI_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| usage(format!("VSI_THREADS must be a thread count, got {v:?}")))?;
    #[cfg(feature = "parallel")]
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    configure_threads()?;
    let file = config::load(cli.global.config.as_deref())?;
    let ctx = Ctx {
        format: cli.global.format.or(file.format).unwrap_or_default(),
        output: cli.global.output.clone().or(file.output.clone()),
        seed: cli.global.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
    };
    match cli.command {
        Command::Levels(a) => cmd::levels::exec(&ctx, config::merge(&a, file.levels.as_ref())?),
        Command::Map(a) => cmd::map::exec(&ctx, config::merge(&a, file.map.as_ref())?),
        Command::Run(a) => cmd::run::exec(&ctx, config::merge(&a, file.run.as_ref())?),
        Command::Synth(a) => cmd::synth::exec(&ctx, config::merge(&a, file.synth.as_ref())?),
        Command::Pump(a) => cmd::pump::exec(&ctx, config::merge(&a, file.pump.as_ref())?),
        Command::Fit(a) => cmd::fit::exec(&ctx, config::merge(&a, file.fit.as_ref())?),
    }
}

fn is_parse_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<Usage>() || c.is::<SeqError>() || c.is::<toml::de::Error>() || matches!(c.downcast_ref::<FitError>(), Some(FitError::Csv { .. }))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_parse_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
