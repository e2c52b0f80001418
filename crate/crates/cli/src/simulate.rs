use std::path::PathBuf;

use clap::Args;
use iwz_core::bounds::{relaxed_bound, theorem3_bound_mc};
use iwz_core::codec::{simulate_excess, DEFAULT_BUDGET};
use iwz_core::{BaSolution, BoundEstimate, BoundQuery, SimulationParams, SimulationReport};
use serde::Serialize;

use crate::model::load_model;
use crate::{read_json, write_json, CliError, Common};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Solution file written by `iwz solve`.
    #[arg(long)]
    solution: PathBuf,
    /// Blocklength.
    #[arg(long)]
    n: usize,
    /// Number of bins (codebook size).
    #[arg(long)]
    m: usize,
    /// Observation distortion threshold.
    #[arg(long)]
    d: f64,
    /// Latent distortion threshold.
    #[arg(long)]
    ds: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Largest race table |U|^n * M allowed.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Serialize)]
struct Report {
    codec: SimulationReport,
    bound: BoundEstimate,
    relaxed_bound: BoundEstimate,
    /// `bound.mean - codec.excess.mean`.
    dominance_margin: f64,
    /// Combined standard error of the margin.
    margin_std_error: f64,
}

pub fn run(args: SimulateArgs) -> Result<u8, CliError> {
    args.common.init_pool()?;
    let model = load_model(&args.model)?;
    let sol: BaSolution = read_json(&args.solution)?;
    sol.recon.validate(&model, sol.channel.u_len())?;
    let seed = args.common.seed;
    let codec = simulate_excess(
        &model,
        &sol.channel,
        &sol.recon,
        &SimulationParams {
            n: args.n,
            m: args.m,
            d: args.d,
            d_s: args.ds,
            trials: args.trials,
            seed,
            budget: args.budget,
        },
    )?;
    let query = BoundQuery::new(args.n, args.m as u64, args.d, args.ds, args.trials, seed);
    let bound = theorem3_bound_mc(&model, &sol.channel, &sol.recon, &query)?;
    let relaxed = relaxed_bound(&model, &sol.channel, &sol.recon, &query)?;
    let report = Report {
        dominance_margin: bound.mean - codec.excess.mean,
        margin_std_error: (bound.std_error.powi(2) + codec.excess.std_error.powi(2)).sqrt(),
        codec,
        bound,
        relaxed_bound: relaxed,
    };
    write_json(&args.common, &report)?;
    Ok(0)
}
