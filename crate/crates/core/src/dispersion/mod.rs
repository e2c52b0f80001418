//! Second-order analysis: moments of the per-letter
//! information-density/distortion vector and the finite-blocklength rate.
//!
//! For a test channel and decoder the per-letter vector is
//!
//! ```text
//! j(s, x, y, u) = [ log2 P(u|x) / P(u|y),  d(x, x̂(u,y)),  d_s(s, ŝ(u,y)) ]
//! ```
//!
//! with mean `J` and covariance `V` over `P(s,x,y) P(u|x)`. At blocklength
//! `n` and excess probability `ε` the achievable rate is
//! `J1 + b1*/√n + 2 log2(n)/n`, where `b1*` is the smallest first threshold
//! whose lower orthant under `N(0, V)` has mass at least `1 - ε` given the
//! distortion slacks.

mod mvn;

pub use mvn::{
    min_feasible_b1, mvn_lower_prob, Cov3, MvnEngine, MvnEstimate, MvnOptions,
    DEGENERATE_VARIANCE,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::LOG_FLOOR;
use crate::model::JointSourceModel;
use crate::solver::{derive_u_given_y, ReconstructionMap, TestChannel};

/// Information density `log2(P(b|a) / P(b))` from a conditional table
/// indexed `(a, b)` and the marginal of `b`.
pub fn info_density(p_b_given_a: &Array2<f64>, p_b: &[f64], a: usize, b: usize) -> Result<f64> {
    let cond = p_b_given_a.get((a, b)).copied().ok_or_else(|| Error::OutOfSupport {
        what: "P(b|a)",
        detail: format!("index ({a}, {b}) outside the table"),
    })?;
    let marg = p_b.get(b).copied().unwrap_or(0.0);
    if !(cond > 0.0 && marg > 0.0) {
        return Err(Error::OutOfSupport {
            what: "P(b|a), P(b)",
            detail: format!("a = {a}, b = {b}"),
        });
    }
    Ok((cond / marg).log2())
}

/// Mean and covariance of the per-letter vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub j_mean: [f64; 3],
    pub v_cov: Cov3,
}

/// The per-letter vector at one cell of the joint.
pub fn j_vector(
    model: &JointSourceModel,
    channel: &TestChannel,
    recon: &ReconstructionMap,
    (s, x, y, u): (usize, usize, usize, usize),
) -> Result<[f64; 3]> {
    let p_cell = model.p_sxy().get((s, x, y)).copied().unwrap_or(0.0);
    let p_u = if x < channel.x_len() && u < channel.u_len() {
        channel.get(x, u)
    } else {
        0.0
    };
    if !(p_cell > 0.0 && p_u > LOG_FLOOR) {
        return Err(Error::OutOfSupport {
            what: "P(s,x,y) P(u|x)",
            detail: format!("s = {s}, x = {x}, y = {y}, u = {u}"),
        });
    }
    let q = derive_u_given_y(model, channel);
    Ok(cell_vector(model, channel, recon, q.as_array(), s, x, y, u))
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn cell_vector(
    model: &JointSourceModel,
    channel: &TestChannel,
    recon: &ReconstructionMap,
    q: &Array2<f64>,
    s: usize,
    x: usize,
    y: usize,
    u: usize,
) -> [f64; 3] {
    [
        (channel.get(x, u) / q[[y, u]]).log2(),
        model.d_x()[[x, recon.x_hat(u, y)]],
        model.d_s()[[s, recon.s_hat(u, y)]],
    ]
}

/// `J` and `V = E[j jᵀ] - J Jᵀ` by exact summation over every cell with
/// positive mass; `V` is symmetrized.
pub fn exact_moments(
    model: &JointSourceModel,
    channel: &TestChannel,
    recon: &ReconstructionMap,
) -> MomentSummary {
    let q = derive_u_given_y(model, channel);
    let q = q.as_array();
    let mut mean = [0.0; 3];
    let mut second = [[0.0; 3]; 3];
    for s in 0..model.s_len() {
        for x in 0..model.x_len() {
            for y in 0..model.y_len() {
                let p_cell = model.p_sxy()[[s, x, y]];
                if p_cell <= 0.0 {
                    continue;
                }
                for u in 0..channel.u_len() {
                    let p_u = channel.get(x, u);
                    if p_u <= LOG_FLOOR {
                        continue;
                    }
                    let w = p_cell * p_u;
                    let j = cell_vector(model, channel, recon, q, s, x, y, u);
                    for r in 0..3 {
                        mean[r] += w * j[r];
                        for c in 0..3 {
                            second[r][c] += w * j[r] * j[c];
                        }
                    }
                }
            }
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            cov[r][c] = second[r][c] - mean[r] * mean[c];
        }
    }
    for r in 0..3 {
        for c in r + 1..3 {
            let avg = 0.5 * (cov[r][c] + cov[c][r]);
            cov[r][c] = avg;
            cov[c][r] = avg;
        }
    }
    MomentSummary {
        j_mean: mean,
        v_cov: cov,
    }
}

/// The `2 log2(n) / n` penalty shared by the rate and the distortion slacks.
pub fn log_penalty(n: u64) -> f64 {
    let n = n as f64;
    2.0 * n.log2() / n
}

/// Normalized distortion slacks `(b2, b3)` at blocklength `n`. An infinite
/// distortion level leaves its constraint free.
pub fn slack_thresholds(moments: &MomentSummary, n: u64, d: f64, d_s: f64) -> (f64, f64) {
    let root = (n as f64).sqrt();
    let pen = log_penalty(n);
    let slack = |level: f64, mean: f64| {
        if level == f64::INFINITY {
            f64::INFINITY
        } else {
            root * (level - mean - pen)
        }
    };
    (slack(d, moments.j_mean[1]), slack(d_s, moments.j_mean[2]))
}

fn check_blocklength(n: u64, epsilon: f64, d: f64, d_s: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::param("n", "blocklength must be >= 2"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param("epsilon", format!("{epsilon} is outside (0, 1)")));
    }
    if d.is_nan() || d_s.is_nan() {
        return Err(Error::param("distortion", "level is NaN"));
    }
    Ok(())
}

/// Second-order achievable rate (bits per symbol) for given moments, or
/// `None` when the distortion levels cannot be met with probability
/// `1 - ε` at this blocklength.
pub fn second_order_rate_from_moments(
    moments: &MomentSummary,
    n: u64,
    epsilon: f64,
    d: f64,
    d_s: f64,
    engine: &MvnEngine,
) -> Result<Option<f64>> {
    check_blocklength(n, epsilon, d, d_s)?;
    let (b2, b3) = slack_thresholds(moments, n, d, d_s);
    let b1 = engine.min_feasible_b1(&moments.v_cov, b2, b3, epsilon)?;
    Ok(b1.map(|b1| moments.j_mean[0] + b1 / (n as f64).sqrt() + log_penalty(n)))
}

/// [`second_order_rate_from_moments`] for a channel and decoder.
#[allow(clippy::too_many_arguments)]
pub fn second_order_rate(
    model: &JointSourceModel,
    channel: &TestChannel,
    recon: &ReconstructionMap,
    n: u64,
    epsilon: f64,
    d: f64,
    d_s: f64,
    opts: &MvnOptions,
) -> Result<Option<f64>> {
    check_blocklength(n, epsilon, d, d_s)?;
    let moments = exact_moments(model, channel, recon);
    second_order_rate_from_moments(&moments, n, epsilon, d, d_s, &MvnEngine::new(opts)?)
}
