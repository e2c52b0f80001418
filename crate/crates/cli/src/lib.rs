//! Command-line interface: model files, solving, region tables and codec
//! simulation.

mod error;
mod model;
mod region;
mod simulate;
mod solve;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use error::CliError;

/// Indirect Wyner-Ziv rate-distortion toolkit.
#[derive(Debug, Parser)]
#[command(name = "iwz", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or validate a model file.
    #[command(subcommand)]
    Model(model::ModelCommand),
    /// Solve for one pair of Lagrange multipliers.
    Solve(solve::SolveArgs),
    /// Sweep a multiplier grid and tabulate the achievable region.
    Region(region::RegionArgs),
    /// Run the exponential-race codec and the random-coding bound.
    Simulate(simulate::SimulateArgs),
}

/// Flags shared by every computing subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Master seed for every random stream.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    fn init_pool(&self) -> Result<(), CliError> {
        if let Some(jobs) = self.jobs {
            if jobs == 0 {
                return Err(CliError::Usage("--jobs must be at least 1".into()));
            }
            // Only the first call can configure the global pool.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
        }
        Ok(())
    }

    fn writer(&self) -> Result<Box<dyn Write>, CliError> {
        Ok(match &self.out {
            Some(path) => Box::new(BufWriter::new(
                File::create(path).map_err(|e| CliError::io(path, e))?,
            )),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Model(cmd) => model::run(cmd),
        Command::Solve(args) => solve::run(args),
        Command::Region(args) => region::run(args),
        Command::Simulate(args) => simulate::run(args),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_owned(),
        source: e,
    })
}

fn write_json<T: serde::Serialize>(common: &Common, value: &T) -> Result<(), CliError> {
    let mut w = common.writer()?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Output(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::Output(e.to_string()))
}
