//! Monte Carlo estimates of the non-asymptotic excess-distortion bound
//! achieved by i.i.d. random coding over a single-letter test channel.
//!
//! Per trial a block of `n` letters `(s, x, y)` is drawn from the source,
//! `u` from the test channel, and the per-letter decoder is applied. The
//! exact bound averages
//!
//! ```text
//! 1 - 1[d_s,n ≤ D_s and d_n ≤ D] / (1 + 2^(Σ ι(u;x) - Σ ι(u;y)) / M)
//! ```
//!
//! and the relaxed bound averages the excess event
//! `{Σ ι-difference > log2 M - log2 n} ∪ {d_s,n > D_s} ∪ {d_n > D}`
//! plus the constant `1/n`.

use ndarray::Array3;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::LOG_FLOOR;
use crate::model::JointSourceModel;
use crate::rng::substream;
use crate::solver::{derive_u_given_y, ReconstructionMap, TestChannel};

/// Blocklength, codebook size, distortion thresholds and sampling controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub n: usize,
    /// `log2` of the number of codewords; fractional values allow `M = 2^(nR)`.
    pub log2_m: f64,
    pub d: f64,
    pub d_s: f64,
    pub trials: usize,
    pub seed: u64,
}

impl BoundQuery {
    pub fn new(n: usize, m: u64, d: f64, d_s: f64, trials: usize, seed: u64) -> Self {
        Self {
            n,
            log2_m: (m as f64).log2(),
            d,
            d_s,
            trials,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n", "blocklength must be >= 1"));
        }
        if !(self.log2_m >= 0.0) || self.log2_m.is_infinite() {
            return Err(Error::param("m", "codebook size must be >= 1"));
        }
        if self.trials == 0 {
            return Err(Error::param("trials", "must be >= 1"));
        }
        if self.d.is_nan() || self.d_s.is_nan() {
            return Err(Error::param("distortion", "threshold is NaN"));
        }
        Ok(())
    }
}

/// Sample mean of a per-trial quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub mean: f64,
    /// Standard error of the mean (sample standard deviation over `√trials`).
    pub std_error: f64,
    pub trials: usize,
    pub n: usize,
    pub log2_m: f64,
    pub d: f64,
    pub d_s: f64,
}

/// Per-letter statistics of one sampled block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSample {
    /// `Σ log2 P(u_i|x_i) / P(u_i|y_i)`.
    pub density: f64,
    /// Average `d(x_i, x̂_i)`.
    pub dist_x: f64,
    /// Average `d_s(s_i, ŝ_i)`.
    pub dist_s: f64,
}

/// Sampler for blocks of `(s, x, y, u)` under a fixed channel and decoder.
pub struct BlockSampler<'a> {
    model: &'a JointSourceModel,
    recon: &'a ReconstructionMap,
    cells: WeightedIndex<f64>,
    u_rows: Vec<Option<WeightedIndex<f64>>>,
    /// `log2 P(u|x) / P(u|y)`, indexed `(x, y, u)`.
    density: Array3<f64>,
}

impl<'a> BlockSampler<'a> {
    pub fn new(
        model: &'a JointSourceModel,
        channel: &TestChannel,
        recon: &'a ReconstructionMap,
    ) -> Result<Self> {
        if channel.x_len() != model.x_len() {
            return Err(Error::DimensionMismatch {
                what: "channel rows".into(),
                expected: model.x_len(),
                found: channel.x_len(),
            });
        }
        recon.validate(model, channel.u_len())?;
        let cells = WeightedIndex::new(model.p_sxy().iter().copied())
            .map_err(|e| Error::param("p_sxy", e.to_string()))?;
        let u_rows = channel
            .as_array()
            .rows()
            .into_iter()
            .map(|row| WeightedIndex::new(row.iter().copied()).ok())
            .collect();
        let q = derive_u_given_y(model, channel);
        let (nx, ny, nu) = (model.x_len(), model.y_len(), channel.u_len());
        let density = Array3::from_shape_fn((nx, ny, nu), |(x, y, u)| {
            let p = channel.get(x, u);
            if p > LOG_FLOOR {
                (p / q.as_array()[[y, u]]).log2()
            } else {
                f64::NEG_INFINITY
            }
        });
        Ok(Self {
            model,
            recon,
            cells,
            u_rows,
            density,
        })
    }

    /// Draws one `(s, x, y)` letter.
    pub fn letter<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize, usize) {
        let idx = self.cells.sample(rng);
        let (nx, ny) = (self.model.x_len(), self.model.y_len());
        (idx / (nx * ny), (idx / ny) % nx, idx % ny)
    }

    /// Draws `u` given `x`.
    pub fn auxiliary<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> Result<usize> {
        self.u_rows[x]
            .as_ref()
            .map(|w| w.sample(rng))
            .ok_or(Error::NoSupport { side: "x", index: x })
    }

    /// `log2 P(u|x) / P(u|y)` for one letter.
    pub fn density(&self, x: usize, y: usize, u: usize) -> f64 {
        self.density[[x, y, u]]
    }

    /// Draws `n` letters, interleaving `(s, x, y)` and `u` per letter.
    pub fn block<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<BlockSample> {
        let mut density = 0.0;
        let mut dx = 0.0;
        let mut ds = 0.0;
        for _ in 0..n {
            let (s, x, y) = self.letter(rng);
            let u = self.auxiliary(x, rng)?;
            density += self.density[[x, y, u]];
            dx += self.model.d_x()[[x, self.recon.x_hat(u, y)]];
            ds += self.model.d_s()[[s, self.recon.s_hat(u, y)]];
        }
        let n = n as f64;
        Ok(BlockSample {
            density,
            dist_x: dx / n,
            dist_s: ds / n,
        })
    }
}

/// Exact-bound integrand for one block.
pub fn exact_integrand(b: &BlockSample, q: &BoundQuery) -> f64 {
    if b.dist_s <= q.d_s && b.dist_x <= q.d {
        let ratio = (b.density - q.log2_m).exp2();
        1.0 - 1.0 / (1.0 + ratio)
    } else {
        1.0
    }
}

/// Relaxed-bound integrand for one block, capped at 1.
pub fn relaxed_integrand(b: &BlockSample, q: &BoundQuery) -> f64 {
    let gamma = q.log2_m - (q.n as f64).log2();
    let excess = b.density > gamma || b.dist_s > q.d_s || b.dist_x > q.d;
    if excess {
        1.0
    } else {
        (1.0 / q.n as f64).min(1.0)
    }
}

/// Mean and standard error of per-trial values, accumulated in trial order.
pub fn welford(values: impl IntoIterator<Item = f64>) -> (f64, f64, usize) {
    let mut count = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for v in values {
        count += 1;
        let delta = v - mean;
        mean += delta / count as f64;
        m2 += delta * (v - mean);
    }
    if count < 2 {
        return (mean, 0.0, count);
    }
    let var = m2 / (count - 1) as f64;
    (mean, (var / count as f64).sqrt(), count)
}

fn estimate(
    model: &JointSourceModel,
    channel: &TestChannel,
    recon: &ReconstructionMap,
    q: &BoundQuery,
    integrand: fn(&BlockSample, &BoundQuery) -> f64,
) -> Result<BoundEstimate> {
    q.validate()?;
    let sampler = BlockSampler::new(model, channel, recon)?;
    let values = (0..q.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(q.seed, t as u64);
            sampler.block(q.n, &mut rng).map(|b| integrand(&b, q))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std_error, trials) = welford(values);
    Ok(BoundEstimate {
        mean: mean.clamp(0.0, 1.0),
        std_error,
        trials,
        n: q.n,
        log2_m: q.log2_m,
        d: q.d,
        d_s: q.d_s,
    })
}

/// Monte Carlo estimate of the exact random-coding bound.
pub fn theorem3_bound_mc(
    model: &JointSourceModel,
    channel: &TestChannel,
    recon: &ReconstructionMap,
    query: &BoundQuery,
) -> Result<BoundEstimate> {
    estimate(model, channel, recon, query, exact_integrand)
}

/// Monte Carlo estimate of the thresholded relaxation with `γ = log2 M - log2 n`.
/// Trial `t` draws the same block as in [`theorem3_bound_mc`], so the two
/// estimates are paired.
pub fn relaxed_bound(
    model: &JointSourceModel,
    channel: &TestChannel,
    recon: &ReconstructionMap,
    query: &BoundQuery,
) -> Result<BoundEstimate> {
    estimate(model, channel, recon, query, relaxed_integrand)
}
