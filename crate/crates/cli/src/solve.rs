use std::path::PathBuf;

use clap::Args;
use iwz_core::{solve, SolveOptions};

use crate::error::EXIT_NUMERICAL;
use crate::model::load_model;
use crate::{write_json, CliError, Common};

#[derive(Debug, Clone, Args)]
pub struct SolverFlags {
    /// Iteration cap per start.
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// Stop when the summed distortion change falls below this.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    /// Auxiliary alphabet size (default |X| + 1).
    #[arg(long)]
    pub u_size: Option<usize>,
    /// Number of initial channels tried.
    #[arg(long, default_value_t = 4)]
    pub starts: usize,
}

impl SolverFlags {
    pub fn options(&self, seed: u64) -> SolveOptions {
        SolveOptions {
            max_iters: self.max_iters,
            tol_delta: self.tol,
            seed,
            u_size: self.u_size,
            starts: self.starts,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    model: PathBuf,
    /// Multiplier on the observation distortion (nats per unit).
    #[arg(long)]
    lambda: f64,
    /// Multiplier on the latent distortion (nats per unit).
    #[arg(long)]
    mu: f64,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    common: Common,
}

/// Writes the solution; exits 0 when converged and 3 otherwise.
pub fn run(args: SolveArgs) -> Result<u8, CliError> {
    args.common.init_pool()?;
    let model = load_model(&args.model)?;
    let sol = solve(&model, args.lambda, args.mu, &args.solver.options(args.common.seed))?;
    write_json(&args.common, &sol)?;
    if sol.converged {
        Ok(0)
    } else {
        eprintln!("warning: stopped after {} iterations without converging", sol.iterations);
        Ok(EXIT_NUMERICAL)
    }
}
