use std::path::PathBuf;

use clap::Args;
use iwz_core::bounds::theorem3_bound_mc;
use iwz_core::rng::derive_seed;
use iwz_core::{sweep_lagrange_grid, BaSolution, BoundQuery, MvnOptions, RegionEvaluator, RegionPoint};

use crate::model::load_model;
use crate::solve::SolverFlags;
use crate::{CliError, Common};

pub const HEADER: [&str; 12] = [
    "lambda",
    "mu",
    "rate",
    "dist_x",
    "dist_s",
    "n",
    "epsilon",
    "second_order_rate",
    "feasible",
    "theorem3_bound",
    "bound_stderr",
    "seed",
];

#[derive(Debug, Args)]
pub struct RegionArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated multipliers on the observation distortion.
    #[arg(long, value_delimiter = ',', required = true)]
    lambdas: Vec<f64>,
    /// Comma-separated multipliers on the latent distortion.
    #[arg(long, value_delimiter = ',', required = true)]
    mus: Vec<f64>,
    /// Comma-separated blocklengths; omit for asymptotic rows only.
    #[arg(long, value_delimiter = ',')]
    n: Vec<u64>,
    /// Comma-separated excess probabilities.
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    epsilon: Vec<f64>,
    /// Normal draws for the orthant probabilities.
    #[arg(long, default_value_t = 200_000)]
    mvn_samples: usize,
    /// Also estimate the random-coding bound on every feasible finite row.
    #[arg(long)]
    bound_trials: Option<usize>,
    #[command(flatten)]
    solver: SolverFlags,
    #[command(flatten)]
    common: Common,
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn point_record(p: &RegionPoint, bound_stderr: Option<f64>, seed: u64) -> Vec<String> {
    vec![
        fmt(p.lambda),
        fmt(p.mu),
        fmt(p.rate),
        fmt(p.dist_x),
        fmt(p.dist_s),
        p.n.map(|n| n.to_string()).unwrap_or_default(),
        opt(p.epsilon),
        opt(p.second_order_rate),
        p.feasible.to_string(),
        opt(p.theorem3_bound),
        opt(bound_stderr),
        seed.to_string(),
    ]
}

pub fn run(args: RegionArgs) -> Result<u8, CliError> {
    args.common.init_pool()?;
    if let Some(e) = args.epsilon.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(CliError::Usage(format!("epsilon {e} is outside (0, 1)")));
    }
    if let Some(n) = args.n.iter().find(|n| **n < 2) {
        return Err(CliError::Usage(format!("blocklength {n} is below 2")));
    }
    let seed = args.common.seed;
    let model = load_model(&args.model)?;
    let sweep = sweep_lagrange_grid(&model, &args.lambdas, &args.mus, &args.solver.options(seed))?;
    let failures = sweep.failures().count();
    eprintln!(
        "solved {} of {} cells, {} Pareto points",
        sweep.cells.len() - failures,
        sweep.cells.len(),
        sweep.pareto.len()
    );
    for cell in sweep.failures() {
        if let Err(e) = &cell.outcome {
            eprintln!("warning: lambda={} mu={}: {e}", cell.lambda, cell.mu);
        }
    }

    let candidates: Vec<&BaSolution> = sweep.solutions().collect();
    let evaluator = if args.n.is_empty() {
        None
    } else {
        let mvn = MvnOptions {
            samples: args.mvn_samples,
            seed,
            force_monte_carlo: false,
        };
        Some(RegionEvaluator::new(&model, candidates.iter().copied(), &mvn)?)
    };

    let mut out = csv::Writer::from_writer(args.common.writer()?);
    let csv_err = |e: csv::Error| CliError::Output(e.to_string());
    out.write_record(HEADER).map_err(csv_err)?;
    let mut row = 0u64;
    for (i, cell) in sweep.cells.iter().enumerate() {
        let sol = match &cell.outcome {
            Err(_) => {
                let mut rec = vec![String::new(); HEADER.len()];
                rec[0] = fmt(cell.lambda);
                rec[1] = fmt(cell.mu);
                rec[8] = "false".into();
                rec[11] = seed.to_string();
                out.write_record(&rec).map_err(csv_err)?;
                continue;
            }
            Ok(_) if !sweep.pareto.contains(&i) => continue,
            Ok(sol) => sol,
        };
        let base = RegionPoint::asymptotic(sol);
        out.write_record(point_record(&base, None, seed)).map_err(csv_err)?;

        let Some(evaluator) = &evaluator else { continue };
        for &n in &args.n {
            for &epsilon in &args.epsilon {
                row += 1;
                let finite = evaluator.finite_rate(n, epsilon, sol.dist_x, sol.dist_s)?;
                let mut point = RegionPoint {
                    n: Some(n),
                    epsilon: Some(epsilon),
                    second_order_rate: finite.map(|f| f.rate),
                    feasible: finite.is_some(),
                    ..base.clone()
                };
                let mut stderr = None;
                if let (Some(trials), Some(f)) = (args.bound_trials, finite) {
                    let winner = candidates[f.candidate];
                    let query = BoundQuery {
                        n: n as usize,
                        log2_m: n as f64 * f.rate.max(0.0),
                        d: sol.dist_x,
                        d_s: sol.dist_s,
                        trials,
                        seed: derive_seed(seed, row),
                    };
                    let b = theorem3_bound_mc(&model, &winner.channel, &winner.recon, &query)?;
                    point.theorem3_bound = Some(b.mean);
                    stderr = Some(b.std_error);
                }
                out.write_record(point_record(&point, stderr, seed)).map_err(csv_err)?;
            }
        }
    }
    out.flush().map_err(|e| CliError::Output(e.to_string()))?;
    Ok(0)
}
