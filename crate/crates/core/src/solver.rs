//! Blahut-Arimoto alternating minimization for the indirect Wyner-Ziv
//! rate-distortion function.
//!
//! The optimization variable is the test channel `P(u | x)` together with a
//! per-letter decoder map `g(u, y) = (ŝ, x̂)`. For fixed multipliers
//! `λ, μ ≥ 0` the solver minimizes the Lagrangian
//!
//! ```text
//! L = I(X; U) - I(U; Y) + λ E[d(X, X̂)] + μ E[d'(X, Y, Ŝ)]
//! ```
//!
//! by cycling three exact block minimizers: the decoder map (a weighted
//! argmin per `(u, y)`), the side-information posterior `P(u | y)` and the
//! softmax channel update. The Lagrangian is therefore non-increasing along
//! the iterates.
//!
//! Logarithms and exponentials are natural inside the updates, so `λ` and
//! `μ` are in nats per distortion unit. Rates are reported in bits.

use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::{ln_or_neg_inf, LOG_FLOOR};
use crate::model::JointSourceModel;
use crate::rng::{substream, STREAM_SOLVER_INIT};

/// Row-sum tolerance for a valid conditional pmf.
pub const ROW_TOLERANCE: f64 = 1e-10;

/// Conditional pmf `P(u | x)`, indexed `(x, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct TestChannel {
    p: Array2<f64>,
}

impl TestChannel {
    /// Validates that every row is a pmf within [`ROW_TOLERANCE`].
    pub fn from_array(p: Array2<f64>) -> Result<Self> {
        if p.ncols() == 0 {
            return Err(Error::param("channel", "auxiliary alphabet is empty"));
        }
        for (x, row) in p.rows().into_iter().enumerate() {
            if let Some(&v) = row.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(Error::NegativeProbability {
                    location: format!("channel row {x}"),
                    value: v,
                });
            }
            let sum = row.sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::param(
                    "channel",
                    format!("row {x} sums to {sum}"),
                ));
            }
        }
        Ok(Self { p })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nx = rows.len();
        let nu = rows.first().map_or(0, Vec::len);
        if let Some((x, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != nu) {
            return Err(Error::DimensionMismatch {
                what: format!("channel row {x}"),
                expected: nu,
                found: r.len(),
            });
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let p = Array2::from_shape_vec((nx, nu), flat).expect("shape checked above");
        Self::from_array(p)
    }

    /// Every row uniform over `u_len` symbols.
    pub fn uniform(x_len: usize, u_len: usize) -> Self {
        Self {
            p: Array2::from_elem((x_len, u_len), 1.0 / u_len as f64),
        }
    }

    /// Deterministic channel `u = ⌊x · |U| / |X|⌋`; for `|U| = |X| + 1` this
    /// is the identity on the first `|X|` symbols.
    pub fn identity(x_len: usize, u_len: usize) -> Self {
        let mut p = Array2::zeros((x_len, u_len));
        for x in 0..x_len {
            p[[x, identity_symbol(x, x_len, u_len)]] = 1.0;
        }
        Self { p }
    }

    pub fn x_len(&self) -> usize {
        self.p.nrows()
    }
    pub fn u_len(&self) -> usize {
        self.p.ncols()
    }
    pub fn as_array(&self) -> &Array2<f64> {
        &self.p
    }
    #[inline]
    pub fn get(&self, x: usize, u: usize) -> f64 {
        self.p[[x, u]]
    }

    /// Marginal `P(u) = Σ_x P(x) P(u | x)`.
    pub fn output_marginal(&self, p_x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.u_len()];
        for (x, row) in self.p.rows().into_iter().enumerate() {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += p_x[x] * v;
            }
        }
        out
    }
}

impl From<TestChannel> for Vec<Vec<f64>> {
    fn from(c: TestChannel) -> Self {
        c.p.rows().into_iter().map(|r| r.to_vec()).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for TestChannel {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

fn identity_symbol(x: usize, x_len: usize, u_len: usize) -> usize {
    (x * u_len / x_len).min(u_len - 1)
}

/// Decoder map `g(u, y) = (ŝ, x̂)` as two index tables, both indexed `(u, y)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "ReconFile", try_from = "ReconFile")]
pub struct ReconstructionMap {
    s_hat: Array2<usize>,
    x_hat: Array2<usize>,
}

#[derive(Serialize, Deserialize)]
struct ReconFile {
    s_hat: Vec<Vec<usize>>,
    x_hat: Vec<Vec<usize>>,
}

impl From<ReconstructionMap> for ReconFile {
    fn from(g: ReconstructionMap) -> Self {
        let rows = |a: &Array2<usize>| a.rows().into_iter().map(|r| r.to_vec()).collect();
        ReconFile {
            s_hat: rows(&g.s_hat),
            x_hat: rows(&g.x_hat),
        }
    }
}

impl TryFrom<ReconFile> for ReconstructionMap {
    type Error = Error;
    fn try_from(f: ReconFile) -> Result<Self> {
        let to_array = |name: &str, rows: Vec<Vec<usize>>| -> Result<Array2<usize>> {
            let nu = rows.len();
            let ny = rows.first().map_or(0, Vec::len);
            if let Some(r) = rows.iter().find(|r| r.len() != ny) {
                return Err(Error::DimensionMismatch {
                    what: name.to_owned(),
                    expected: ny,
                    found: r.len(),
                });
            }
            Ok(Array2::from_shape_vec((nu, ny), rows.into_iter().flatten().collect())
                .expect("shape checked above"))
        };
        let s_hat = to_array("s_hat", f.s_hat)?;
        let x_hat = to_array("x_hat", f.x_hat)?;
        if s_hat.dim() != x_hat.dim() {
            return Err(Error::DimensionMismatch {
                what: "x_hat rows".into(),
                expected: s_hat.nrows(),
                found: x_hat.nrows(),
            });
        }
        Ok(Self { s_hat, x_hat })
    }
}

impl ReconstructionMap {
    pub fn new(s_hat: Array2<usize>, x_hat: Array2<usize>) -> Self {
        assert_eq!(s_hat.dim(), x_hat.dim(), "reconstruction tables differ in shape");
        Self { s_hat, x_hat }
    }

    /// Same `(ŝ, x̂)` for every `(u, y)`.
    pub fn constant(u_len: usize, y_len: usize, s_hat: usize, x_hat: usize) -> Self {
        Self::new(
            Array2::from_elem((u_len, y_len), s_hat),
            Array2::from_elem((u_len, y_len), x_hat),
        )
    }

    #[inline]
    pub fn s_hat(&self, u: usize, y: usize) -> usize {
        self.s_hat[[u, y]]
    }
    #[inline]
    pub fn x_hat(&self, u: usize, y: usize) -> usize {
        self.x_hat[[u, y]]
    }
    pub fn u_len(&self) -> usize {
        self.s_hat.nrows()
    }
    pub fn y_len(&self) -> usize {
        self.s_hat.ncols()
    }

    /// Checks that every entry indexes a valid reconstruction symbol.
    pub fn validate(&self, model: &JointSourceModel, u_len: usize) -> Result<()> {
        if self.u_len() != u_len || self.y_len() != model.y_len() {
            return Err(Error::DimensionMismatch {
                what: "reconstruction map (u, y)".into(),
                expected: u_len * model.y_len(),
                found: self.u_len() * self.y_len(),
            });
        }
        if self.s_hat.iter().any(|&v| v >= model.s_hat_len())
            || self.x_hat.iter().any(|&v| v >= model.x_hat_len())
        {
            return Err(Error::param("recon", "index outside reconstruction alphabet"));
        }
        Ok(())
    }
}

/// `P(u | y)`, indexed `(y, u)`, with rows for `P(y) = 0` flagged unused.
#[derive(Debug, Clone, PartialEq)]
pub struct UGivenY {
    table: Array2<f64>,
    used: Vec<bool>,
}

impl UGivenY {
    pub fn row(&self, y: usize) -> Result<&[f64]> {
        if self.used.get(y).copied().unwrap_or(false) {
            Ok(self
                .table
                .row(y)
                .to_slice()
                .expect("standard layout rows are contiguous"))
        } else {
            Err(Error::OutOfSupport {
                what: "P(y)",
                detail: format!("y = {y}"),
            })
        }
    }
    pub fn is_used(&self, y: usize) -> bool {
        self.used[y]
    }
    /// Raw table; unused rows are zero.
    pub fn as_array(&self) -> &Array2<f64> {
        &self.table
    }
    #[inline]
    pub(crate) fn get(&self, y: usize, u: usize) -> f64 {
        self.table[[y, u]]
    }
}

/// `P(u | y) = Σ_x P(x | y) P(u | x)` under the chain `U - X - Y`.
pub fn derive_u_given_y(model: &JointSourceModel, channel: &TestChannel) -> UGivenY {
    let table = model.p_x_given_y().dot(channel.as_array());
    let used = model.p_y().iter().map(|&p| p > 0.0).collect();
    UGivenY { table, used }
}

/// Decoder update: for each `(u, y)` picks
/// `argmin_{x̂, ŝ} Σ_x P(x|y) P(u|x) (λ d(x, x̂) + μ d'(x, y, ŝ))`.
///
/// The objective separates, so `x̂` and `ŝ` are minimized independently.
/// Ties go to the lowest index; a zero multiplier therefore yields index 0.
pub fn update_reconstruction(
    model: &JointSourceModel,
    channel: &TestChannel,
    lambda: f64,
    mu: f64,
) -> ReconstructionMap {
    let (nu, ny) = (channel.u_len(), model.y_len());
    let mut s_hat = Array2::<usize>::zeros((nu, ny));
    let mut x_hat = Array2::<usize>::zeros((nu, ny));
    let p_x_given_y = model.p_x_given_y();
    let d_mod = model.modified_distortion_table();

    for y in 0..ny {
        if model.p_y()[y] <= 0.0 {
            continue;
        }
        // weights[u, x] = P(x | y) P(u | x)
        let mut weights = channel.as_array().t().to_owned();
        for (mut col, &pxy) in weights.columns_mut().into_iter().zip(p_x_given_y.row(y)) {
            col *= pxy;
        }
        if lambda > 0.0 {
            let cost = weights.dot(model.d_x());
            for u in 0..nu {
                x_hat[[u, y]] = argmin_scaled(cost.row(u).iter().copied(), lambda);
            }
        }
        if mu > 0.0 {
            let cost = weights.dot(&d_mod.slice(s![.., y, ..]));
            for u in 0..nu {
                s_hat[[u, y]] = argmin_scaled(cost.row(u).iter().copied(), mu);
            }
        }
    }
    ReconstructionMap { s_hat, x_hat }
}

fn argmin_scaled(values: impl Iterator<Item = f64>, scale: f64) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        let v = scale * v;
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Channel update: row `x` is the softmax over `u` of
/// `Σ_y P(y|x) (ln P(u|y) - λ d(x, x̂(u,y)) - μ d'(x, y, ŝ(u,y)))`,
/// evaluated in the log domain with max subtraction.
///
/// Rows for `P(x) = 0` are left uniform; they carry no mass.
pub fn update_test_channel(
    model: &JointSourceModel,
    p_u_given_y: &UGivenY,
    recon: &ReconstructionMap,
    lambda: f64,
    mu: f64,
) -> Result<TestChannel> {
    let nx = model.x_len();
    let nu = recon.u_len();
    let d_x = model.d_x();
    let d_mod = model.modified_distortion_table();
    let p_y_given_x = model.p_y_given_x();

    let mut out = Array2::<f64>::zeros((nx, nu));
    let mut exponent = vec![0.0f64; nu];
    for x in 0..nx {
        if model.p_x()[x] <= 0.0 {
            out.row_mut(x).fill(1.0 / nu as f64);
            continue;
        }
        exponent.iter_mut().for_each(|e| *e = 0.0);
        for (y, &w) in p_y_given_x.row(x).iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            for (u, e) in exponent.iter_mut().enumerate() {
                let log_q = ln_or_neg_inf(p_u_given_y.get(y, u));
                let penalty =
                    lambda * d_x[[x, recon.x_hat(u, y)]] + mu * d_mod[[x, y, recon.s_hat(u, y)]];
                *e += w * (log_q - penalty);
            }
        }
        let max = exponent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::AllZeroRow { x });
        }
        if !max.is_finite() {
            return Err(Error::NumericalCollapse(format!(
                "non-finite exponent in channel row {x}"
            )));
        }
        let mut row = out.row_mut(x);
        let mut total = 0.0;
        for (r, &e) in row.iter_mut().zip(&exponent) {
            *r = (e - max).exp();
            total += *r;
        }
        row.mapv_inplace(|v| v / total);
    }
    Ok(TestChannel { p: out })
}

/// `I(X; U) - I(U; Y)` in bits, computed as the conditional mutual
/// information `I(X; U | Y) = Σ_{x,y} P(x,y) KL(P(·|x) ‖ P(·|y))`, which
/// equals the difference under `U - X - Y`.
pub fn evaluate_rate(model: &JointSourceModel, channel: &TestChannel) -> f64 {
    rate_nats(model, channel, &derive_u_given_y(model, channel)) / std::f64::consts::LN_2
}

fn rate_nats(model: &JointSourceModel, channel: &TestChannel, q: &UGivenY) -> f64 {
    let p_xy = model.p_xy();
    let mut total = 0.0;
    for x in 0..model.x_len() {
        for y in 0..model.y_len() {
            let w = p_xy[[x, y]];
            if w < LOG_FLOOR {
                continue;
            }
            let mut kl = 0.0;
            for u in 0..channel.u_len() {
                let p = channel.get(x, u);
                if p > LOG_FLOOR {
                    kl += p * (p / q.get(y, u)).ln();
                }
            }
            total += w * kl;
        }
    }
    total
}

/// Expected distortions of a `(channel, decoder)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distortions {
    /// `E[d(X, X̂)]`.
    pub dist_x: f64,
    /// `E[d_s(S, Ŝ)]`, summed over the full joint of `(s, x, y, u)`.
    pub dist_s: f64,
}

/// Exact expected distortions over the finite joint `P(s,x,y) P(u|x)`.
pub fn evaluate_distortions(
    model: &JointSourceModel,
    channel: &TestChannel,
    recon: &ReconstructionMap,
) -> Distortions {
    let p = model.p_sxy();
    let (d_x, d_s) = (model.d_x(), model.d_s());
    let mut dist_x = 0.0;
    let mut dist_s = 0.0;
    for x in 0..model.x_len() {
        for y in 0..model.y_len() {
            let w_xy = model.p_xy()[[x, y]];
            if w_xy <= 0.0 {
                continue;
            }
            for u in 0..channel.u_len() {
                let pu = channel.get(x, u);
                if pu <= 0.0 {
                    continue;
                }
                let (sh, xh) = (recon.s_hat(u, y), recon.x_hat(u, y));
                dist_x += w_xy * pu * d_x[[x, xh]];
                for s in 0..model.s_len() {
                    dist_s += p[[s, x, y]] * pu * d_s[[s, sh]];
                }
            }
        }
    }
    Distortions { dist_x, dist_s }
}

/// `E[d'(X, Y, Ŝ)]`: the latent distortion through the modified measure.
/// Agrees with [`Distortions::dist_s`] for every channel and decoder.
pub fn modified_latent_distortion(
    model: &JointSourceModel,
    channel: &TestChannel,
    recon: &ReconstructionMap,
) -> f64 {
    let d_mod = model.modified_distortion_table();
    let mut total = 0.0;
    for x in 0..model.x_len() {
        for y in 0..model.y_len() {
            let w = model.p_xy()[[x, y]];
            if w < LOG_FLOOR {
                continue;
            }
            for u in 0..channel.u_len() {
                total += w * channel.get(x, u) * d_mod[[x, y, recon.s_hat(u, y)]];
            }
        }
    }
    total
}

/// Lagrangian `I(X;U|Y) + λ E[d] + μ E[d']` with the rate in nats.
pub fn lagrangian(
    model: &JointSourceModel,
    channel: &TestChannel,
    recon: &ReconstructionMap,
    lambda: f64,
    mu: f64,
) -> f64 {
    let q = derive_u_given_y(model, channel);
    let d = evaluate_distortions(model, channel, recon);
    rate_nats(model, channel, &q)
        + lambda * d.dist_x
        + mu * modified_latent_distortion(model, channel, recon)
}

/// Solver controls. Defaults: 100 iterations, distortion tolerance 1e-3,
/// seed 42, `|U| = |X| + 1`, four initializations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Stop once `|Δ dist_x| + |Δ dist_s|` between iterations falls below this.
    pub tol_delta: f64,
    pub seed: u64,
    /// Auxiliary alphabet size; `None` means `|X| + 1`.
    pub u_size: Option<usize>,
    /// Number of initial channels tried; the lowest final Lagrangian wins.
    /// See [`initial_channel`] for the sequence.
    pub starts: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol_delta: 1e-3,
            seed: 42,
            u_size: None,
            starts: 4,
        }
    }
}

impl SolveOptions {
    pub fn u_size_for(&self, model: &JointSourceModel) -> usize {
        self.u_size.unwrap_or(model.x_len() + 1)
    }
}

/// Scale of the log-normal jitter applied to the uniform start.
pub const UNIFORM_START_NOISE: f64 = 0.01;

/// Initial channel number `start` for the given seed.
///
/// * `0`: uniform rows times `exp(0.01 ζ)`, renormalized.
/// * `1`: [`TestChannel::identity`] mixed 9:1 with uniform, same jitter.
/// * `k ≥ 2`: rows `∝ exp(ζ)`, a broad random start.
///
/// `ζ` is standard normal per entry, drawn from a sub-stream of `seed`.
pub fn initial_channel(x_len: usize, u_len: usize, seed: u64, start: usize) -> TestChannel {
    let mut rng = substream(seed, STREAM_SOLVER_INIT + start as u64);
    let base = match start {
        0 => TestChannel::uniform(x_len, u_len).p,
        1 => {
            let id = TestChannel::identity(x_len, u_len).p;
            id.mapv(|v| 0.9 * v + 0.1 / u_len as f64)
        }
        _ => Array2::from_elem((x_len, u_len), 1.0),
    };
    let scale = if start >= 2 { 1.0 } else { UNIFORM_START_NOISE };
    let mut p = base;
    for mut row in p.rows_mut() {
        for v in row.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v *= (scale * z).exp();
        }
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    TestChannel { p }
}

/// One row of the solver trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Lagrangian with the rate term in nats.
    pub lagrangian: f64,
    pub rate: f64,
    pub dist_x: f64,
    pub dist_s: f64,
}

/// Final iterate of [`solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaSolution {
    pub channel: TestChannel,
    pub recon: ReconstructionMap,
    /// `I(X; U) - I(U; Y)` in bits per symbol.
    pub rate: f64,
    pub dist_x: f64,
    pub dist_s: f64,
    pub lambda: f64,
    pub mu: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Which initialization produced this solution.
    pub start: usize,
    /// Per-iteration record of the winning start; entry 0 is the initial state.
    pub trace: Vec<IterationRecord>,
}

impl BaSolution {
    pub fn lagrangian(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.lagrangian)
    }
}

fn check_multipliers(lambda: f64, mu: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", format!("{lambda} is not finite and >= 0")));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::param("mu", format!("{mu} is not finite and >= 0")));
    }
    Ok(())
}

/// Runs the alternation from each configured start and keeps the solution
/// with the smallest final Lagrangian (earliest start on ties).
pub fn solve(
    model: &JointSourceModel,
    lambda: f64,
    mu: f64,
    opts: &SolveOptions,
) -> Result<BaSolution> {
    check_multipliers(lambda, mu)?;
    if opts.max_iters == 0 {
        return Err(Error::param("max_iters", "must be >= 1"));
    }
    if !(opts.tol_delta > 0.0) {
        return Err(Error::param("tol_delta", "must be > 0"));
    }
    if opts.starts == 0 {
        return Err(Error::param("starts", "must be >= 1"));
    }
    let u_len = opts.u_size_for(model);
    if u_len == 0 {
        return Err(Error::param("u_size", "must be >= 1"));
    }

    let mut best: Option<BaSolution> = None;
    for start in 0..opts.starts {
        let init = initial_channel(model.x_len(), u_len, opts.seed, start);
        let mut sol = solve_from(model, init, lambda, mu, opts.max_iters, opts.tol_delta)?;
        sol.start = start;
        if best.as_ref().is_none_or(|b| sol.lagrangian() < b.lagrangian()) {
            best = Some(sol);
        }
    }
    Ok(best.expect("at least one start"))
}

/// The alternation from a given initial channel.
///
/// Each iteration refreshes `P(u | y)`, applies the channel update and then
/// the decoder update, so the recorded state `(channel, decoder)` is always
/// consistent. Stops after `max_iters` iterations or when the summed
/// absolute change of the two distortions drops below `tol_delta`.
pub fn solve_from(
    model: &JointSourceModel,
    init: TestChannel,
    lambda: f64,
    mu: f64,
    max_iters: usize,
    tol_delta: f64,
) -> Result<BaSolution> {
    check_multipliers(lambda, mu)?;
    if init.x_len() != model.x_len() {
        return Err(Error::DimensionMismatch {
            what: "initial channel rows".into(),
            expected: model.x_len(),
            found: init.x_len(),
        });
    }
    let mut channel = init;
    let mut recon = update_reconstruction(model, &channel, lambda, mu);
    let mut trace = vec![record(model, &channel, &recon, lambda, mu, 0)?];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        let q = derive_u_given_y(model, &channel);
        channel = match update_test_channel(model, &q, &recon, lambda, mu) {
            Ok(c) => c,
            Err(Error::AllZeroRow { x }) => {
                return Err(Error::NumericalCollapse(format!(
                    "channel row {x} lost all mass at iteration {iterations}"
                )))
            }
            Err(e) => return Err(e),
        };
        recon = update_reconstruction(model, &channel, lambda, mu);
        let rec = record(model, &channel, &recon, lambda, mu, iterations)?;
        let prev = trace.last().expect("trace starts non-empty");
        let delta = (rec.dist_x - prev.dist_x).abs() + (rec.dist_s - prev.dist_s).abs();
        trace.push(rec);
        if delta < tol_delta {
            converged = true;
            break;
        }
    }

    let last = *trace.last().expect("trace starts non-empty");
    Ok(BaSolution {
        channel,
        recon,
        rate: last.rate,
        dist_x: last.dist_x,
        dist_s: last.dist_s,
        lambda,
        mu,
        iterations,
        converged,
        start: 0,
        trace,
    })
}

fn record(
    model: &JointSourceModel,
    channel: &TestChannel,
    recon: &ReconstructionMap,
    lambda: f64,
    mu: f64,
    iteration: usize,
) -> Result<IterationRecord> {
    let q = derive_u_given_y(model, channel);
    let rate = rate_nats(model, channel, &q);
    let d = evaluate_distortions(model, channel, recon);
    let d_mod = modified_latent_distortion(model, channel, recon);
    let lagrangian = rate + lambda * d.dist_x + mu * d_mod;
    if !lagrangian.is_finite() {
        return Err(Error::NumericalCollapse(format!(
            "non-finite Lagrangian at iteration {iteration}"
        )));
    }
    Ok(IterationRecord {
        iteration,
        lagrangian,
        rate: rate / std::f64::consts::LN_2,
        dist_x: d.dist_x,
        dist_s: d.dist_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::binary_entropy;
    use crate::model::{GaussianMixtureParams, ModelTables, Symbol};

    fn bits() -> Vec<Symbol> {
        vec![Symbol::Value(0.0), Symbol::Value(1.0)]
    }

    /// `S = X` uniform, `Y` independent uniform, Hamming.
    fn independent_side_info() -> JointSourceModel {
        let mut p = vec![vec![vec![0.0; 2]; 2]; 2];
        for s in 0..2 {
            for y in 0..2 {
                p[s][s][y] = 0.25;
            }
        }
        let ham = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        JointSourceModel::from_tables(ModelTables {
            s_alphabet: bits(),
            x_alphabet: bits(),
            y_alphabet: bits(),
            s_hat_alphabet: bits(),
            x_hat_alphabet: bits(),
            p_sxy: p,
            d_x: ham.clone(),
            d_s: ham,
        })
        .unwrap()
    }

    #[test]
    fn u_given_y_with_independent_side_info_is_output_marginal() {
        let m = independent_side_info();
        let c = initial_channel(2, 3, 5, 2);
        let q = derive_u_given_y(&m, &c);
        let pu = c.output_marginal(m.p_x());
        for y in 0..2 {
            for (u, &p) in q.row(y).unwrap().iter().enumerate() {
                assert!((p - pu[u]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn u_given_y_with_noiseless_side_info_copies() {
        let m = JointSourceModel::binary_chain(0.1, 0.0);
        let c = TestChannel::identity(2, 3);
        let q = derive_u_given_y(&m, &c);
        for y in 0..2 {
            let row = q.row(y).unwrap();
            for u in 0..3 {
                assert_eq!(row[u], if u == y { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn uniform_channel_gives_uniform_u_given_y() {
        let m = JointSourceModel::tiny_dsbs();
        let q = derive_u_given_y(&m, &TestChannel::uniform(2, 3));
        for y in 0..2 {
            assert!(q.row(y).unwrap().iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn unused_side_info_rows_are_flagged() {
        let mut t = JointSourceModel::tiny_dsbs().to_tables();
        for s in 0..2 {
            for x in 0..2 {
                t.p_sxy[s][x][1] = 0.0;
            }
        }
        let sum: f64 = t.p_sxy.iter().flatten().flatten().sum();
        t.p_sxy.iter_mut().flatten().flatten().for_each(|v| *v /= sum);
        let m = JointSourceModel::from_tables(t).unwrap();
        let q = derive_u_given_y(&m, &TestChannel::uniform(2, 3));
        assert!(q.row(0).is_ok());
        assert!(matches!(q.row(1), Err(Error::OutOfSupport { .. })));
    }

    #[test]
    fn zero_lambda_leaves_x_hat_at_first_symbol() {
        let m = JointSourceModel::tiny_dsbs();
        let c = TestChannel::identity(2, 3);
        let g = update_reconstruction(&m, &c, 0.0, 1.0);
        let g2 = update_reconstruction(&m, &c, 5.0, 1.0);
        for u in 0..3 {
            for y in 0..2 {
                assert_eq!(g.x_hat(u, y), 0);
                assert_eq!(g.s_hat(u, y), g2.s_hat(u, y));
            }
        }
    }

    #[test]
    fn reconstruction_matches_exhaustive_objective() {
        let m = JointSourceModel::tiny_dsbs();
        let c = TestChannel::identity(2, 3);
        let g = update_reconstruction(&m, &c, 1.0, 1.0);
        for u in 0..3 {
            for y in 0..2 {
                // Exhaustive evaluation over the 4 candidate pairs.
                let objective = |xh: usize, sh: usize| -> f64 {
                    (0..2)
                        .map(|x| {
                            let w = m.p_x_given_y()[[y, x]] * c.get(x, u);
                            let dp: f64 = (0..2)
                                .map(|s| m.posterior_s(x, y).unwrap()[s] * m.d_s()[[s, sh]])
                                .sum();
                            w * (m.d_x()[[x, xh]] + dp)
                        })
                        .sum()
                };
                let mut best = (0, 0, f64::INFINITY);
                for xh in 0..2 {
                    for sh in 0..2 {
                        let v = objective(xh, sh);
                        if v < best.2 {
                            best = (xh, sh, v);
                        }
                    }
                }
                assert_eq!((g.x_hat(u, y), g.s_hat(u, y)), (best.0, best.1), "u={u} y={y}");
                if u < 2 {
                    // The majority posterior class given x = u.
                    assert_eq!(g.s_hat(u, y), u);
                }
            }
        }
    }

    #[test]
    fn symmetric_classes_tie_to_lowest_index() {
        let mut params = GaussianMixtureParams::classification_default().with_grid(6, -3.0, 3.0);
        params.theta_1 = params.theta_0;
        let m = JointSourceModel::gaussian_mixture(&params).unwrap();
        let c = initial_channel(6, 7, 3, 2);
        let g = update_reconstruction(&m, &c, 1.0, 1.0);
        for u in 0..7 {
            for y in 0..6 {
                assert_eq!(g.s_hat(u, y), 0);
            }
        }
    }

    #[test]
    fn zero_multipliers_and_uniform_q_give_uniform_rows() {
        let m = JointSourceModel::tiny_dsbs();
        let q = derive_u_given_y(&m, &TestChannel::uniform(2, 4));
        let g = ReconstructionMap::constant(4, 2, 0, 0);
        let c = update_test_channel(&m, &q, &g, 0.0, 0.0).unwrap();
        assert!(c.as_array().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn zero_multipliers_with_independent_y_give_geometric_mean() {
        let m = independent_side_info();
        let init = initial_channel(2, 3, 11, 2);
        let q = derive_u_given_y(&m, &init);
        let g = ReconstructionMap::constant(3, 2, 0, 0);
        let c = update_test_channel(&m, &q, &g, 0.0, 0.0).unwrap();
        // Rows equal the normalized geometric mean over y, identical across x.
        let gm: Vec<f64> = (0..3)
            .map(|u| (0.5 * q.get(0, u).ln() + 0.5 * q.get(1, u).ln()).exp())
            .collect();
        let z: f64 = gm.iter().sum();
        for x in 0..2 {
            for u in 0..3 {
                assert!((c.get(x, u) - gm[u] / z).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn all_zero_row_is_reported() {
        let m = JointSourceModel::tiny_dsbs();
        let c = TestChannel::from_rows(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let mut q = derive_u_given_y(&m, &c);
        q.table.fill(0.0);
        let g = ReconstructionMap::constant(2, 2, 0, 0);
        assert!(matches!(
            update_test_channel(&m, &q, &g, 1.0, 1.0),
            Err(Error::AllZeroRow { x: 0 })
        ));
    }

    #[test]
    fn rate_of_uniform_and_identity_channels() {
        let m = JointSourceModel::tiny_dsbs();
        assert!(evaluate_rate(&m, &TestChannel::uniform(2, 3)).abs() < 1e-15);
        let r = evaluate_rate(&m, &TestChannel::identity(2, 3));
        // H(X) - I(X;Y) = h2(0.25).
        assert!((r - binary_entropy(0.25)).abs() < 1e-12);
        assert!((r - 0.811_278_124_459_132_8).abs() < 1e-12);

        let ind = independent_side_info();
        let r = evaluate_rate(&ind, &TestChannel::identity(2, 3));
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_equals_mutual_information_difference() {
        let m = JointSourceModel::tiny_dsbs();
        let c = initial_channel(2, 3, 9, 3);
        let pu = c.output_marginal(m.p_x());
        let q = derive_u_given_y(&m, &c);
        let mut i_xu = 0.0;
        for x in 0..2 {
            for u in 0..3 {
                i_xu += m.p_x()[x] * c.get(x, u) * (c.get(x, u) / pu[u]).log2();
            }
        }
        let mut i_uy = 0.0;
        for y in 0..2 {
            for u in 0..3 {
                i_uy += m.p_y()[y] * q.get(y, u) * (q.get(y, u) / pu[u]).log2();
            }
        }
        assert!((evaluate_rate(&m, &c) - (i_xu - i_uy)).abs() < 1e-12);
    }

    #[test]
    fn distortions_of_constant_guess_and_noiseless_copy() {
        let m = JointSourceModel::tiny_dsbs();
        let g = ReconstructionMap::constant(3, 2, 0, 0);
        let d = evaluate_distortions(&m, &TestChannel::uniform(2, 3), &g);
        assert!((d.dist_s - 0.5).abs() < 1e-15);
        assert!((d.dist_x - 0.5).abs() < 1e-15);

        let copy = JointSourceModel::binary_chain(0.1, 0.0);
        let c = TestChannel::identity(2, 3);
        let g = update_reconstruction(&copy, &c, 1.0, 1.0);
        let d = evaluate_distortions(&copy, &c, &g);
        assert!(d.dist_x.abs() < 1e-15);
    }

    #[test]
    fn latent_distortion_routes_agree() {
        let m = JointSourceModel::tiny_dsbs();
        let c = TestChannel::identity(2, 3);
        let g = update_reconstruction(&m, &c, 1.0, 1.0);
        let d = evaluate_distortions(&m, &c, &g);
        // Oracle: full sum over the 2 x 2 x 2 x 3 cells.
        let mut oracle = 0.0;
        for s in 0..2 {
            for x in 0..2 {
                for y in 0..2 {
                    for u in 0..3 {
                        oracle += m.p_sxy()[[s, x, y]]
                            * c.get(x, u)
                            * m.d_s()[[s, g.s_hat(u, y)]];
                    }
                }
            }
        }
        assert!((d.dist_s - oracle).abs() < 1e-15);
        assert!((modified_latent_distortion(&m, &c, &g) - d.dist_s).abs() < 1e-10);
        // MAP decoding of S from X: error 0.1.
        assert!((d.dist_s - 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_multipliers_converge_to_zero_rate() {
        let m = JointSourceModel::tiny_dsbs();
        let sol = solve(&m, 0.0, 0.0, &SolveOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.rate.abs() < 1e-4, "rate {}", sol.rate);
        assert_eq!(sol.iterations, 1);
        assert!((sol.dist_x - 0.5).abs() < 1e-9);
        assert!((sol.dist_s - 0.5).abs() < 1e-9);
    }

    #[test]
    fn lagrangian_trace_is_monotone() {
        let m = JointSourceModel::tiny_dsbs();
        for &(l, u) in &[(0.5, 4.0), (2.0, 2.0), (4.0, 0.5)] {
            let opts = SolveOptions {
                tol_delta: 1e-12,
                max_iters: 300,
                ..SolveOptions::default()
            };
            for start in 0..4 {
                let init = initial_channel(2, 3, 42, start);
                let sol = solve_from(&m, init, l, u, opts.max_iters, opts.tol_delta).unwrap();
                for w in sol.trace.windows(2) {
                    assert!(w[1].lagrangian <= w[0].lagrangian + 1e-9);
                }
            }
        }
    }

    #[test]
    fn solve_is_deterministic() {
        let m = JointSourceModel::tiny_dsbs();
        let a = solve(&m, 2.0, 1.0, &SolveOptions::default()).unwrap();
        let b = solve(&m, 2.0, 1.0, &SolveOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_options() {
        let m = JointSourceModel::tiny_dsbs();
        assert!(solve(&m, -1.0, 0.0, &SolveOptions::default()).is_err());
        let opts = SolveOptions {
            max_iters: 0,
            ..SolveOptions::default()
        };
        assert!(solve(&m, 1.0, 1.0, &opts).is_err());
    }

    #[test]
    fn channel_validation() {
        assert!(TestChannel::from_rows(vec![vec![0.5, 0.5], vec![0.2, 0.8]]).is_ok());
        assert!(TestChannel::from_rows(vec![vec![0.5, 0.6]]).is_err());
        assert!(TestChannel::from_rows(vec![vec![1.5, -0.5]]).is_err());
        assert!(TestChannel::from_rows(vec![vec![0.5, 0.5], vec![1.0]]).is_err());
    }

    #[test]
    fn solution_serializes_as_nested_arrays() {
        let m = JointSourceModel::tiny_dsbs();
        let sol = solve(&m, 1.0, 1.0, &SolveOptions::default()).unwrap();
        let json = serde_json::to_string(&sol).unwrap();
        let back: BaSolution = serde_json::from_str(&json).unwrap();
        assert_eq!(back.channel, sol.channel);
        assert_eq!(back.recon, sol.recon);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v["channel"][0].is_array());
        assert!(v["recon"]["s_hat"][0].is_array());
    }
}
