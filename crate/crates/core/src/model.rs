//! Finite-alphabet joint source models `P(s, x, y)` and the indirect
//! (modified) distortion measure.
//!
//! A [`JointSourceModel`] holds the latent source `S`, the encoder
//! observation `X`, the decoder side information `Y`, both reconstruction
//! alphabets and the two per-letter distortion tables. Everything the solver
//! needs repeatedly (marginals, conditionals, the class posterior
//! `P(s | x, y)` and the modified distortion `d'(x, y, ŝ)`) is computed once
//! at construction; the model is immutable afterwards.

use ndarray::{Array2, Array3, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::{entropy_bits, LOG_FLOOR};

/// Largest tolerated deviation of the input pmf from unit mass before it is
/// rejected rather than renormalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// An alphabet letter: a real grid value or a free-form label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Symbol {
    Value(f64),
    Label(String),
}

impl Symbol {
    pub fn value(&self) -> Option<f64> {
        match self {
            Symbol::Value(v) => Some(*v),
            Symbol::Label(_) => None,
        }
    }
}

impl From<f64> for Symbol {
    fn from(v: f64) -> Self {
        Symbol::Value(v)
    }
}

impl From<&str> for Symbol {
    fn from(s: &str) -> Self {
        Symbol::Label(s.to_owned())
    }
}

/// Plain-table form of a model; this is also the on-disk JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTables {
    pub s_alphabet: Vec<Symbol>,
    pub x_alphabet: Vec<Symbol>,
    pub y_alphabet: Vec<Symbol>,
    pub s_hat_alphabet: Vec<Symbol>,
    pub x_hat_alphabet: Vec<Symbol>,
    /// Indexed `[s][x][y]`.
    pub p_sxy: Vec<Vec<Vec<f64>>>,
    /// Indexed `[x][x̂]`.
    pub d_x: Vec<Vec<f64>>,
    /// Indexed `[s][ŝ]`.
    pub d_s: Vec<Vec<f64>>,
}

/// Validated joint source model.
#[derive(Debug, Clone)]
pub struct JointSourceModel {
    s_alphabet: Vec<Symbol>,
    x_alphabet: Vec<Symbol>,
    y_alphabet: Vec<Symbol>,
    s_hat_alphabet: Vec<Symbol>,
    x_hat_alphabet: Vec<Symbol>,
    p_sxy: Array3<f64>,
    d_x: Array2<f64>,
    d_s: Array2<f64>,
    p_xy: Array2<f64>,
    p_s: Vec<f64>,
    p_x: Vec<f64>,
    p_y: Vec<f64>,
    /// `P(y | x)`, indexed `(x, y)`; zero rows for `P(x) = 0`.
    p_y_given_x: Array2<f64>,
    /// `P(x | y)`, indexed `(y, x)`; zero rows for `P(y) = 0`.
    p_x_given_y: Array2<f64>,
    support: Array2<bool>,
    /// `P(s | x, y)`, indexed `(x, y, s)`.
    posterior: Array3<f64>,
    /// `d'(x, y, ŝ)`, indexed `(x, y, ŝ)`.
    d_mod: Array3<f64>,
}

impl JointSourceModel {
    /// Validates `tables` and builds the model, renormalizing the pmf when its
    /// mass is within [`NORMALIZATION_TOLERANCE`] of one.
    pub fn from_tables(tables: ModelTables) -> Result<Self> {
        let ModelTables {
            s_alphabet,
            x_alphabet,
            y_alphabet,
            s_hat_alphabet,
            x_hat_alphabet,
            p_sxy,
            d_x,
            d_s,
        } = tables;
        for (name, len) in [
            ("s_alphabet", s_alphabet.len()),
            ("x_alphabet", x_alphabet.len()),
            ("y_alphabet", y_alphabet.len()),
            ("s_hat_alphabet", s_hat_alphabet.len()),
            ("x_hat_alphabet", x_hat_alphabet.len()),
        ] {
            if len == 0 {
                return Err(Error::param(name, "alphabet is empty"));
            }
        }
        let (ns, nx, ny) = (s_alphabet.len(), x_alphabet.len(), y_alphabet.len());
        let (nsh, nxh) = (s_hat_alphabet.len(), x_hat_alphabet.len());

        check_len("p_sxy", ns, p_sxy.len())?;
        let mut p = Array3::<f64>::zeros((ns, nx, ny));
        for (s, plane) in p_sxy.iter().enumerate() {
            check_len(&format!("p_sxy[{s}]"), nx, plane.len())?;
            for (x, row) in plane.iter().enumerate() {
                check_len(&format!("p_sxy[{s}][{x}]"), ny, row.len())?;
                for (y, &v) in row.iter().enumerate() {
                    if !(v >= 0.0) || !v.is_finite() {
                        return Err(Error::NegativeProbability {
                            location: format!("p_sxy[{s}][{x}][{y}]"),
                            value: v,
                        });
                    }
                    p[[s, x, y]] = v;
                }
            }
        }
        let d_x = distortion_table("d_x", &d_x, nx, nxh)?;
        let d_s = distortion_table("d_s", &d_s, ns, nsh)?;

        let sum: f64 = p.sum();
        if !((sum - 1.0).abs() < NORMALIZATION_TOLERANCE) {
            return Err(Error::SumNotOne { sum });
        }
        p.mapv_inplace(|v| v / sum);

        Ok(Self::assemble(
            s_alphabet,
            x_alphabet,
            y_alphabet,
            s_hat_alphabet,
            x_hat_alphabet,
            p,
            d_x,
            d_s,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        s_alphabet: Vec<Symbol>,
        x_alphabet: Vec<Symbol>,
        y_alphabet: Vec<Symbol>,
        s_hat_alphabet: Vec<Symbol>,
        x_hat_alphabet: Vec<Symbol>,
        p_sxy: Array3<f64>,
        d_x: Array2<f64>,
        d_s: Array2<f64>,
    ) -> Self {
        let (ns, nx, ny) = p_sxy.dim();
        let nsh = d_s.ncols();

        let p_xy = Array2::from_shape_fn((nx, ny), |(x, y)| (0..ns).map(|s| p_sxy[[s, x, y]]).sum());
        let p_s = (0..ns)
            .map(|s| p_sxy.index_axis(ndarray::Axis(0), s).sum())
            .collect();
        let p_x: Vec<f64> = p_xy.rows().into_iter().map(|r| r.sum()).collect();
        let p_y: Vec<f64> = p_xy.columns().into_iter().map(|c| c.sum()).collect();
        let support = p_xy.mapv(|v| v >= LOG_FLOOR);

        let p_y_given_x = Array2::from_shape_fn((nx, ny), |(x, y)| {
            if p_x[x] > 0.0 && support[[x, y]] {
                p_xy[[x, y]] / p_x[x]
            } else {
                0.0
            }
        });
        let p_x_given_y = Array2::from_shape_fn((ny, nx), |(y, x)| {
            if p_y[y] > 0.0 && support[[x, y]] {
                p_xy[[x, y]] / p_y[y]
            } else {
                0.0
            }
        });

        let mut posterior = Array3::<f64>::zeros((nx, ny, ns));
        let mut d_mod = Array3::<f64>::zeros((nx, ny, nsh));
        for x in 0..nx {
            for y in 0..ny {
                if !support[[x, y]] {
                    continue;
                }
                let mass = p_xy[[x, y]];
                for s in 0..ns {
                    posterior[[x, y, s]] = p_sxy[[s, x, y]] / mass;
                }
                for sh in 0..nsh {
                    d_mod[[x, y, sh]] = (0..ns)
                        .map(|s| posterior[[x, y, s]] * d_s[[s, sh]])
                        .sum();
                }
            }
        }

        Self {
            s_alphabet,
            x_alphabet,
            y_alphabet,
            s_hat_alphabet,
            x_hat_alphabet,
            p_sxy,
            d_x,
            d_s,
            p_xy,
            p_s,
            p_x,
            p_y,
            p_y_given_x,
            p_x_given_y,
            support,
            posterior,
            d_mod,
        }
    }

    /// Two-class Gaussian mixture discretized on a uniform grid of cell
    /// centers: `S` uniform on `{0, 1}` and `(X, Y) | S = s ~ N(0, Σ_s)`.
    ///
    /// Each class table is normalized separately and weighted by 1/2, so the
    /// `S` marginal is exactly uniform. `d_x` is squared error on grid
    /// values, `d_s` is Hamming, `x̂` ranges over the `x` grid.
    pub fn gaussian_mixture(params: &GaussianMixtureParams) -> Result<Self> {
        params.validate()?;
        let grid = params.grid();
        let n = grid.len();
        let covs = params.covariances();

        let mut p = Array3::<f64>::zeros((2, n, n));
        for (s, &(sxx, sxy, syy)) in covs.iter().enumerate() {
            let det = sxx * syy - sxy * sxy;
            let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
            let mut total = 0.0;
            for (ix, &x) in grid.iter().enumerate() {
                for (iy, &y) in grid.iter().enumerate() {
                    let q = (syy * x * x - 2.0 * sxy * x * y + sxx * y * y) / det;
                    let density = norm * (-0.5 * q).exp();
                    p[[s, ix, iy]] = density;
                    total += density;
                }
            }
            p.index_axis_mut(ndarray::Axis(0), s)
                .mapv_inplace(|v| 0.5 * v / total);
        }

        let d_x = Array2::from_shape_fn((n, n), |(i, j)| (grid[i] - grid[j]).powi(2));
        let d_s = hamming(2);
        let values: Vec<Symbol> = grid.iter().map(|&v| Symbol::Value(v)).collect();
        let classes = vec![Symbol::Value(0.0), Symbol::Value(1.0)];
        Ok(Self::assemble(
            classes.clone(),
            values.clone(),
            values.clone(),
            classes,
            values,
            p,
            d_x,
            d_s,
        ))
    }

    /// Binary test model: `S ~ Bernoulli(1/2)`, `X = S` flipped with
    /// probability 0.1, `Y = X` flipped with probability 0.25, Hamming
    /// distortions on both. Small enough for exhaustive enumeration.
    pub fn tiny_dsbs() -> Self {
        Self::binary_chain(0.1, 0.25)
    }

    /// `S ~ Bernoulli(1/2)`, `X = S ⊕ Bernoulli(flip_sx)`,
    /// `Y = X ⊕ Bernoulli(flip_xy)`, Hamming distortions.
    pub fn binary_chain(flip_sx: f64, flip_xy: f64) -> Self {
        let mut p = Array3::<f64>::zeros((2, 2, 2));
        for s in 0..2 {
            for x in 0..2 {
                for y in 0..2 {
                    let px = if x == s { 1.0 - flip_sx } else { flip_sx };
                    let py = if y == x { 1.0 - flip_xy } else { flip_xy };
                    p[[s, x, y]] = 0.5 * px * py;
                }
            }
        }
        let bits = || vec![Symbol::Value(0.0), Symbol::Value(1.0)];
        Self::assemble(bits(), bits(), bits(), bits(), bits(), p, hamming(2), hamming(2))
    }

    pub fn s_len(&self) -> usize {
        self.s_alphabet.len()
    }
    pub fn x_len(&self) -> usize {
        self.x_alphabet.len()
    }
    pub fn y_len(&self) -> usize {
        self.y_alphabet.len()
    }
    pub fn s_hat_len(&self) -> usize {
        self.s_hat_alphabet.len()
    }
    pub fn x_hat_len(&self) -> usize {
        self.x_hat_alphabet.len()
    }

    pub fn s_alphabet(&self) -> &[Symbol] {
        &self.s_alphabet
    }
    pub fn x_alphabet(&self) -> &[Symbol] {
        &self.x_alphabet
    }
    pub fn y_alphabet(&self) -> &[Symbol] {
        &self.y_alphabet
    }
    pub fn s_hat_alphabet(&self) -> &[Symbol] {
        &self.s_hat_alphabet
    }
    pub fn x_hat_alphabet(&self) -> &[Symbol] {
        &self.x_hat_alphabet
    }

    /// `P(s, x, y)`, indexed `(s, x, y)`.
    pub fn p_sxy(&self) -> &Array3<f64> {
        &self.p_sxy
    }
    /// `P(x, y)`, indexed `(x, y)`.
    pub fn p_xy(&self) -> &Array2<f64> {
        &self.p_xy
    }
    pub fn p_s(&self) -> &[f64] {
        &self.p_s
    }
    pub fn p_x(&self) -> &[f64] {
        &self.p_x
    }
    pub fn p_y(&self) -> &[f64] {
        &self.p_y
    }
    /// `P(y | x)`, indexed `(x, y)`.
    pub fn p_y_given_x(&self) -> &Array2<f64> {
        &self.p_y_given_x
    }
    /// `P(x | y)`, indexed `(y, x)`.
    pub fn p_x_given_y(&self) -> &Array2<f64> {
        &self.p_x_given_y
    }
    /// `d(x, x̂)`.
    pub fn d_x(&self) -> &Array2<f64> {
        &self.d_x
    }
    /// `d_s(s, ŝ)`.
    pub fn d_s(&self) -> &Array2<f64> {
        &self.d_s
    }
    /// Modified distortion table `d'(x, y, ŝ)`; zero outside the support.
    pub fn modified_distortion_table(&self) -> &Array3<f64> {
        &self.d_mod
    }

    pub fn in_support(&self, x: usize, y: usize) -> bool {
        x < self.x_len() && y < self.y_len() && self.support[[x, y]]
    }

    /// Class posterior `P(s | x, y)`.
    pub fn posterior_s(&self, x: usize, y: usize) -> Result<ArrayView1<'_, f64>> {
        self.check_support(x, y)?;
        Ok(self.posterior.slice(ndarray::s![x, y, ..]))
    }

    /// `d'(x, y, ŝ) = Σ_s P(s | x, y) d_s(s, ŝ)`.
    pub fn modified_distortion(&self, x: usize, y: usize, s_hat: usize) -> Result<f64> {
        self.check_support(x, y)?;
        if s_hat >= self.s_hat_len() {
            return Err(Error::param(
                "s_hat",
                format!("index {s_hat} outside alphabet of size {}", self.s_hat_len()),
            ));
        }
        Ok(self.d_mod[[x, y, s_hat]])
    }

    fn check_support(&self, x: usize, y: usize) -> Result<()> {
        if self.in_support(x, y) {
            Ok(())
        } else {
            Err(Error::OutOfSupport {
                what: "P(x, y)",
                detail: format!("x = {x}, y = {y}"),
            })
        }
    }

    /// Marginal entropies `(H(S), H(X), H(Y))` in bits.
    pub fn marginal_entropies(&self) -> (f64, f64, f64) {
        (
            entropy_bits(self.p_s.iter().copied()),
            entropy_bits(self.p_x.iter().copied()),
            entropy_bits(self.p_y.iter().copied()),
        )
    }

    pub fn to_tables(&self) -> ModelTables {
        let (ns, nx, _) = self.p_sxy.dim();
        ModelTables {
            s_alphabet: self.s_alphabet.clone(),
            x_alphabet: self.x_alphabet.clone(),
            y_alphabet: self.y_alphabet.clone(),
            s_hat_alphabet: self.s_hat_alphabet.clone(),
            x_hat_alphabet: self.x_hat_alphabet.clone(),
            p_sxy: (0..ns)
                .map(|s| {
                    (0..nx)
                        .map(|x| self.p_sxy.slice(ndarray::s![s, x, ..]).to_vec())
                        .collect()
                })
                .collect(),
            d_x: self.d_x.rows().into_iter().map(|r| r.to_vec()).collect(),
            d_s: self.d_s.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

/// Parameters of the two-class Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureParams {
    pub sigma_x2: f64,
    pub sigma_y2: f64,
    pub theta_0: f64,
    pub theta_1: f64,
    pub grid_count: usize,
    pub grid_min: f64,
    pub grid_max: f64,
}

impl GaussianMixtureParams {
    /// `σ_X² = 2, σ_Y² = 1, θ₀ = 1, θ₁ = -1`, 100 levels on `[-10, 10]`.
    pub fn classification_default() -> Self {
        Self {
            sigma_x2: 2.0,
            sigma_y2: 1.0,
            theta_0: 1.0,
            theta_1: -1.0,
            grid_count: 100,
            grid_min: -10.0,
            grid_max: 10.0,
        }
    }

    pub fn with_grid(mut self, count: usize, min: f64, max: f64) -> Self {
        self.grid_count = count;
        self.grid_min = min;
        self.grid_max = max;
        self
    }

    /// Cell centers of the uniform grid.
    pub fn grid(&self) -> Vec<f64> {
        let width = (self.grid_max - self.grid_min) / self.grid_count as f64;
        (0..self.grid_count)
            .map(|k| self.grid_min + (k as f64 + 0.5) * width)
            .collect()
    }

    /// `(σ_X², θ_s, σ_Y²)` for each class.
    fn covariances(&self) -> [(f64, f64, f64); 2] {
        [
            (self.sigma_x2, self.theta_0, self.sigma_y2),
            (self.sigma_x2, self.theta_1, self.sigma_y2),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_x2 > 0.0 && self.sigma_x2.is_finite()) {
            return Err(Error::param("sigma_x2", "must be finite and > 0"));
        }
        if !(self.sigma_y2 > 0.0 && self.sigma_y2.is_finite()) {
            return Err(Error::param("sigma_y2", "must be finite and > 0"));
        }
        if self.grid_count < 2 {
            return Err(Error::param("grid_count", "need at least 2 levels"));
        }
        if !(self.grid_min < self.grid_max) || !self.grid_min.is_finite() || !self.grid_max.is_finite()
        {
            return Err(Error::param("grid", "need finite grid_min < grid_max"));
        }
        for (class, (sxx, sxy, syy)) in self.covariances().into_iter().enumerate() {
            let det = sxx * syy - sxy * sxy;
            if !(det > 0.0) {
                return Err(Error::NonPositiveDefinite { class, det });
            }
        }
        Ok(())
    }
}

/// Hamming distortion on an alphabet of size `n`.
pub fn hamming(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { 1.0 })
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what: what.to_owned(),
            expected,
            found,
        })
    }
}

fn distortion_table(
    name: &'static str,
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
) -> Result<Array2<f64>> {
    check_len(name, nrows, rows.len())?;
    let mut out = Array2::zeros((nrows, ncols));
    for (i, row) in rows.iter().enumerate() {
        check_len(&format!("{name}[{i}]"), ncols, row.len())?;
        for (j, &v) in row.iter().enumerate() {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidDistortion {
                    table: name,
                    row: i,
                    col: j,
                    value: v,
                });
            }
            out[[i, j]] = v;
        }
    }
    Ok(out)
}
