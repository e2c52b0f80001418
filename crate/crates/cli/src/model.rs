use std::path::PathBuf;

use clap::{Args, Subcommand};
use iwz_core::{GaussianMixtureParams, JointSourceModel, ModelTables};

use crate::{read_json, write_json, CliError, Common};

#[derive(Debug, Subcommand)]
pub enum ModelCommand {
    /// Write a canonical model file.
    Build(BuildArgs),
    /// Check a model file and print its sizes and marginal entropies.
    Validate {
        path: PathBuf,
    },
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["gaussian_mixture", "tiny_dsbs", "from_table"]))]
pub struct BuildArgs {
    /// Discretized two-class Gaussian mixture.
    #[arg(long)]
    gaussian_mixture: bool,
    /// Binary latent, observation and side information with flips 0.1 and 0.25.
    #[arg(long)]
    tiny_dsbs: bool,
    /// Normalize and re-emit an existing table file.
    #[arg(long, value_name = "PATH")]
    from_table: Option<PathBuf>,

    /// Observation variance.
    #[arg(long, default_value_t = 2.0)]
    sx2: f64,
    /// Side-information variance.
    #[arg(long, default_value_t = 1.0)]
    sy2: f64,
    /// Observation/side-information covariance for class 0.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    t0: f64,
    /// Observation/side-information covariance for class 1.
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    t1: f64,
    /// Quantization levels per axis.
    #[arg(long, default_value_t = 100)]
    levels: usize,
    /// Quantization range.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], allow_negative_numbers = true, default_values_t = [-10.0, 10.0])]
    range: Vec<f64>,

    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn load_model(path: &std::path::Path) -> Result<JointSourceModel, CliError> {
    let tables: ModelTables = read_json(path)?;
    Ok(JointSourceModel::from_tables(tables)?)
}

pub fn run(cmd: ModelCommand) -> Result<u8, CliError> {
    match cmd {
        ModelCommand::Build(args) => {
            let model = if args.tiny_dsbs {
                JointSourceModel::tiny_dsbs()
            } else if let Some(path) = &args.from_table {
                load_model(path)?
            } else {
                let params = GaussianMixtureParams {
                    sigma_x2: args.sx2,
                    sigma_y2: args.sy2,
                    theta_0: args.t0,
                    theta_1: args.t1,
                    grid_count: args.levels,
                    grid_min: args.range[0],
                    grid_max: args.range[1],
                };
                JointSourceModel::gaussian_mixture(&params)?
            };
            let common = Common {
                seed: 0,
                jobs: None,
                out: args.out,
            };
            write_json(&common, &model.to_tables())?;
            Ok(0)
        }
        ModelCommand::Validate { path } => {
            let model = load_model(&path)?;
            let (hs, hx, hy) = model.marginal_entropies();
            println!(
                "OK |S|={} |X|={} |Y|={} |S_hat|={} |X_hat|={} H(S)={hs:.6} H(X)={hx:.6} H(Y)={hy:.6} bits",
                model.s_len(),
                model.x_len(),
                model.y_len(),
                model.s_hat_len(),
                model.x_hat_len(),
            );
            Ok(0)
        }
    }
}
