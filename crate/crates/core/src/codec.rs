//! Exponential-race encoder and decoder over finite alphabets.
//!
//! Encoder and decoder share one unit-rate exponential variate per
//! (auxiliary sequence, bin) pair. The encoder picks the pair minimizing
//! `weight / (Π P(u_i|x_i) / M)` and sends the bin. The decoder, knowing
//! only the bin and `y`, picks the sequence in that bin minimizing
//! `weight / Π P(u_i|y_i)` and applies the per-letter decoder map. All
//! races are evaluated in the log domain; ties go to the lowest index.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{welford, BlockSampler};
use crate::error::{Error, Result};
use crate::info::ln_or_neg_inf;
use crate::model::JointSourceModel;
use crate::rng::{derive_seed, substream};
use crate::solver::{derive_u_given_y, ReconstructionMap, TestChannel, UGivenY};

/// Default cap on `|U|^n · M` race entries.
pub const DEFAULT_BUDGET: u64 = 1 << 20;

const SIMULATION_SALT: u64 = 0x00C0_DEC0;

/// Number of race entries `|U|^n · M`, saturating on overflow.
pub fn race_size(u_len: usize, n: usize, m: usize) -> u128 {
    let mut total = m as u128;
    for _ in 0..n {
        total = total.saturating_mul(u_len as u128);
    }
    total
}

/// Exp(1) weights indexed by (auxiliary sequence, bin).
#[derive(Debug, Clone, PartialEq)]
pub struct SharedRandomness {
    n: usize,
    u_len: usize,
    m: usize,
    weights: Vec<f64>,
}

impl SharedRandomness {
    pub fn generate<R: Rng + ?Sized>(
        n: usize,
        u_len: usize,
        m: usize,
        budget: u64,
        rng: &mut R,
    ) -> Result<Self> {
        if n == 0 || u_len == 0 || m == 0 {
            return Err(Error::param("race", "n, |U| and M must all be >= 1"));
        }
        let required = race_size(u_len, n, m);
        if required > budget as u128 {
            return Err(Error::BudgetExceeded { required, budget });
        }
        let weights = (0..required as usize)
            .map(|_| {
                let w: f64 = rng.sample(Exp1);
                // Exp1 can return exactly 0 only with negligible probability.
                w.max(f64::MIN_POSITIVE)
            })
            .collect();
        Ok(Self {
            n,
            u_len,
            m,
            weights,
        })
    }

    pub fn from_seed(n: usize, u_len: usize, m: usize, budget: u64, seed: u64) -> Result<Self> {
        Self::generate(n, u_len, m, budget, &mut substream(seed, 0))
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn u_len(&self) -> usize {
        self.u_len
    }
    pub fn bins(&self) -> usize {
        self.m
    }
    pub fn sequences(&self) -> usize {
        self.weights.len() / self.m
    }

    /// Weight for sequence index `u_index` and 1-based bin `l`.
    pub fn weight(&self, u_index: usize, l: usize) -> f64 {
        self.weights[u_index * self.m + (l - 1)]
    }

    /// Sequence for an index; the first letter is the most significant digit.
    pub fn sequence(&self, mut u_index: usize) -> Vec<usize> {
        let mut seq = vec![0; self.n];
        for slot in seq.iter_mut().rev() {
            *slot = u_index % self.u_len;
            u_index /= self.u_len;
        }
        seq
    }
}

/// `Σ ln P(u_i | ·)` for every sequence, in index order.
fn sequence_log_densities(rows: &[&[f64]]) -> Vec<f64> {
    let mut acc = vec![0.0];
    for row in rows {
        let mut next = Vec::with_capacity(acc.len() * row.len());
        for &prefix in &acc {
            for &p in row.iter() {
                next.push(prefix + ln_or_neg_inf(p));
            }
        }
        acc = next;
    }
    acc
}

/// Encoder output: the transmitted bin and the selected sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoded {
    /// 1-based bin index.
    pub l: usize,
    pub u_index: usize,
    pub u: Vec<usize>,
}

pub fn encode(x_seq: &[usize], shared: &SharedRandomness, channel: &TestChannel) -> Result<Encoded> {
    check_length(x_seq.len(), shared)?;
    if channel.u_len() != shared.u_len {
        return Err(Error::DimensionMismatch {
            what: "auxiliary alphabet".into(),
            expected: shared.u_len,
            found: channel.u_len(),
        });
    }
    let mut rows = Vec::with_capacity(x_seq.len());
    for &x in x_seq {
        if x >= channel.x_len() {
            return Err(Error::NoSupport { side: "x", index: x });
        }
        let row = channel
            .as_array()
            .row(x)
            .to_slice()
            .expect("standard layout rows are contiguous");
        if !row.iter().any(|&p| p > 0.0) {
            return Err(Error::NoSupport { side: "x", index: x });
        }
        rows.push(row);
    }
    let log_density = sequence_log_densities(&rows);

    // The 1/M bin mass is common to every entry and drops out of the argmin.
    let mut best: Option<(usize, usize, f64)> = None;
    for (u_index, &ld) in log_density.iter().enumerate() {
        if ld == f64::NEG_INFINITY {
            continue;
        }
        for l in 1..=shared.m {
            let score = shared.weight(u_index, l).ln() - ld;
            if best.is_none_or(|b| score < b.2) {
                best = Some((u_index, l, score));
            }
        }
    }
    let (u_index, l, _) = best.ok_or(Error::NoSupport { side: "x", index: x_seq[0] })?;
    Ok(Encoded {
        l,
        u_index,
        u: shared.sequence(u_index),
    })
}

/// Decoder output: the recovered sequence and both reconstructions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoded {
    pub u_index: usize,
    pub u: Vec<usize>,
    pub s_hat: Vec<usize>,
    pub x_hat: Vec<usize>,
}

pub fn decode(
    l: usize,
    y_seq: &[usize],
    shared: &SharedRandomness,
    p_u_given_y: &UGivenY,
    recon: &ReconstructionMap,
) -> Result<Decoded> {
    check_length(y_seq.len(), shared)?;
    if !(1..=shared.m).contains(&l) {
        return Err(Error::param("l", format!("bin {l} outside 1..={}", shared.m)));
    }
    let mut rows = Vec::with_capacity(y_seq.len());
    for &y in y_seq {
        let row = p_u_given_y.row(y).map_err(|_| Error::NoSupport { side: "y", index: y })?;
        if row.len() != shared.u_len || !row.iter().any(|&p| p > 0.0) {
            return Err(Error::NoSupport { side: "y", index: y });
        }
        rows.push(row);
    }
    let log_density = sequence_log_densities(&rows);
    let mut best: Option<(usize, f64)> = None;
    for (u_index, &ld) in log_density.iter().enumerate() {
        if ld == f64::NEG_INFINITY {
            continue;
        }
        let score = shared.weight(u_index, l).ln() - ld;
        if best.is_none_or(|b| score < b.1) {
            best = Some((u_index, score));
        }
    }
    let (u_index, _) = best.ok_or(Error::NoSupport { side: "y", index: y_seq[0] })?;
    let u = shared.sequence(u_index);
    let s_hat = u.iter().zip(y_seq).map(|(&u, &y)| recon.s_hat(u, y)).collect();
    let x_hat = u.iter().zip(y_seq).map(|(&u, &y)| recon.x_hat(u, y)).collect();
    Ok(Decoded {
        u_index,
        u,
        s_hat,
        x_hat,
    })
}

fn check_length(len: usize, shared: &SharedRandomness) -> Result<()> {
    if len != shared.n {
        return Err(Error::DimensionMismatch {
            what: "block length".into(),
            expected: shared.n,
            found: len,
        });
    }
    Ok(())
}

/// Empirical frequency with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    pub mean: f64,
    pub std_error: f64,
}

impl Frequency {
    fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let (mean, std_error, _) = welford(values);
        Self { mean, std_error }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n: usize,
    pub m: usize,
    pub d: f64,
    pub d_s: f64,
    pub trials: usize,
    pub seed: u64,
    /// Frequency of `d_s,n ≥ D_s` or `d_n ≥ D`.
    pub excess: Frequency,
    /// Frequency of the decoder recovering a different sequence.
    pub mismatch: Frequency,
    /// Average of `1 - 1 / (1 + 2^(Σι(u;x) - Σι(u;y)) / M)` at the encoder's sequence.
    pub matching_bound: Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub n: usize,
    pub m: usize,
    pub d: f64,
    pub d_s: f64,
    pub trials: usize,
    pub seed: u64,
    pub budget: u64,
}

struct TrialOutcome {
    excess: bool,
    mismatch: bool,
    matching: f64,
}

/// Runs `trials` independent encode/decode rounds, each with fresh shared
/// randomness and a fresh source block.
pub fn simulate_excess(
    model: &JointSourceModel,
    channel: &TestChannel,
    recon: &ReconstructionMap,
    p: &SimulationParams,
) -> Result<SimulationReport> {
    if p.n == 0 || p.m == 0 || p.trials == 0 {
        return Err(Error::param("simulation", "n, M and trials must all be >= 1"));
    }
    let required = race_size(channel.u_len(), p.n, p.m);
    if required > p.budget as u128 {
        return Err(Error::BudgetExceeded {
            required,
            budget: p.budget,
        });
    }
    let sampler = BlockSampler::new(model, channel, recon)?;
    let q = derive_u_given_y(model, channel);
    let stream_seed = derive_seed(p.seed, SIMULATION_SALT);
    let log2_m = (p.m as f64).log2();

    let outcomes = (0..p.trials)
        .into_par_iter()
        .map(|t| -> Result<TrialOutcome> {
            let mut rng = substream(stream_seed, t as u64);
            let letters: Vec<_> = (0..p.n).map(|_| sampler.letter(&mut rng)).collect();
            let shared = SharedRandomness::generate(p.n, channel.u_len(), p.m, p.budget, &mut rng)?;
            let xs: Vec<usize> = letters.iter().map(|l| l.1).collect();
            let ys: Vec<usize> = letters.iter().map(|l| l.2).collect();
            let enc = encode(&xs, &shared, channel)?;
            let dec = decode(enc.l, &ys, &shared, &q, recon)?;

            let n = p.n as f64;
            let mut dx = 0.0;
            let mut ds = 0.0;
            let mut density = 0.0;
            for (i, &(s, x, y)) in letters.iter().enumerate() {
                dx += model.d_x()[[x, dec.x_hat[i]]];
                ds += model.d_s()[[s, dec.s_hat[i]]];
                density += sampler.density(x, y, enc.u[i]);
            }
            let (dx, ds) = (dx / n, ds / n);
            Ok(TrialOutcome {
                excess: ds >= p.d_s || dx >= p.d,
                mismatch: dec.u_index != enc.u_index,
                matching: 1.0 - 1.0 / (1.0 + (density - log2_m).exp2()),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let indicator = |b: bool| if b { 1.0 } else { 0.0 };
    Ok(SimulationReport {
        n: p.n,
        m: p.m,
        d: p.d,
        d_s: p.d_s,
        trials: p.trials,
        seed: p.seed,
        excess: Frequency::from_values(outcomes.iter().map(|o| indicator(o.excess))),
        mismatch: Frequency::from_values(outcomes.iter().map(|o| indicator(o.mismatch))),
        matching_bound: Frequency::from_values(outcomes.iter().map(|o| o.matching)),
    })
}
