//! Lower-orthant probabilities of a centered trivariate normal.
//!
//! Diagonal covariances use the closed-form product of univariate CDFs.
//! Otherwise a fixed bank of standard normal draws is pushed through a
//! factor of the covariance, so repeated queries share common random
//! numbers: the estimate is exactly monotone in `b`, and the smallest
//! feasible first threshold is an order statistic of the bank.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::{substream, STREAM_MVN};

/// Variances below this are treated as exact point masses at zero.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;
/// Off-diagonal magnitudes below this count as a diagonal covariance.
pub const DIAGONAL_TOLERANCE: f64 = 1e-12;
/// Most negative eigenvalue accepted as numerical noise.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// 3 x 3 covariance, row-major.
pub type Cov3 = [[f64; 3]; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvnOptions {
    pub samples: usize,
    pub seed: u64,
    /// Skip the closed form even for diagonal covariances.
    pub force_monte_carlo: bool,
}

impl Default for MvnOptions {
    fn default() -> Self {
        Self {
            samples: 200_000,
            seed: 42,
            force_monte_carlo: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvnEstimate {
    pub probability: f64,
    /// Binomial standard error; zero on the closed-form path.
    pub std_error: f64,
}

/// Probability engine holding the common standard normal draws.
#[derive(Debug, Clone)]
pub struct MvnEngine {
    z: Vec<[f64; 3]>,
    force_monte_carlo: bool,
    normal: Normal,
}

impl MvnEngine {
    pub fn new(opts: &MvnOptions) -> Result<Self> {
        if opts.samples == 0 {
            return Err(Error::param("samples", "must be >= 1"));
        }
        let mut rng = substream(opts.seed, STREAM_MVN);
        let z = (0..opts.samples)
            .map(|_| {
                [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ]
            })
            .collect();
        Ok(Self {
            z,
            force_monte_carlo: opts.force_monte_carlo,
            normal: Normal::standard(),
        })
    }

    pub fn samples(&self) -> usize {
        self.z.len()
    }

    /// `P[B ≤ b]` for `B ~ N(0, v)`. Thresholds may be infinite.
    pub fn lower_prob(&self, v: &Cov3, b: [f64; 3]) -> Result<MvnEstimate> {
        if b.iter().any(|x| x.is_nan()) {
            return Err(Error::param("b", "threshold is NaN"));
        }
        let shape = Shape::of(v)?;
        if !self.force_monte_carlo && shape.diagonal {
            let p = (0..3).map(|i| self.marginal_cdf(v, i, b[i])).product();
            return Ok(MvnEstimate {
                probability: p,
                std_error: 0.0,
            });
        }
        let p = self.count_joint(&shape, b, None) as f64 / self.samples() as f64;
        Ok(self.estimate(p))
    }

    /// Smallest `b1` with `P[B ≤ (b1, b2, b3)] ≥ 1 - ε`, or `None` when even
    /// `b1 → ∞` leaves `P[B2 ≤ b2, B3 ≤ b3] < 1 - ε` (or reaches it only in
    /// the limit).
    pub fn min_feasible_b1(&self, v: &Cov3, b2: f64, b3: f64, epsilon: f64) -> Result<Option<f64>> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::param("epsilon", format!("{epsilon} is outside (0, 1)")));
        }
        if b2.is_nan() || b3.is_nan() {
            return Err(Error::param("b", "threshold is NaN"));
        }
        let target = 1.0 - epsilon;
        let shape = Shape::of(v)?;
        let degenerate_first = v[0][0] < DEGENERATE_VARIANCE;

        if !self.force_monte_carlo && shape.diagonal {
            let tail = self.marginal_cdf(v, 1, b2) * self.marginal_cdf(v, 2, b3);
            if degenerate_first {
                return Ok((tail >= target).then_some(0.0));
            }
            let needed = target / tail;
            if !(needed < 1.0) {
                return Ok(None);
            }
            return Ok(Some(v[0][0].sqrt() * self.normal.inverse_cdf(needed)));
        }

        let n = self.samples();
        let k = ((target * n as f64) - 1e-9).ceil().max(1.0) as usize;
        if degenerate_first {
            let hits = self.count_joint(&shape, [f64::INFINITY, b2, b3], None);
            return Ok((hits >= k).then_some(0.0));
        }
        let mut first = Vec::with_capacity(n);
        self.count_joint(&shape, [f64::INFINITY, b2, b3], Some(&mut first));
        if first.len() < k {
            return Ok(None);
        }
        let (_, kth, _) = first.select_nth_unstable_by(k - 1, f64::total_cmp);
        Ok(Some(*kth))
    }

    fn estimate(&self, p: f64) -> MvnEstimate {
        MvnEstimate {
            probability: p,
            std_error: (p * (1.0 - p) / self.samples() as f64).sqrt(),
        }
    }

    fn marginal_cdf(&self, v: &Cov3, i: usize, b: f64) -> f64 {
        if v[i][i] < DEGENERATE_VARIANCE {
            if b >= 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            self.normal.cdf(b / v[i][i].sqrt())
        }
    }

    /// Counts draws with every active coordinate below its threshold. When
    /// `first` is given, pushes the first coordinate of each draw that
    /// satisfies the remaining constraints instead of checking it.
    fn count_joint(&self, shape: &Shape, b: [f64; 3], mut first: Option<&mut Vec<f64>>) -> usize {
        let skip_first = first.is_some();
        for (i, &bi) in b.iter().enumerate() {
            if !shape.active.contains(&i) && bi < 0.0 && !(skip_first && i == 0) {
                return 0;
            }
        }
        let m = shape.active.len();
        let mut hits = 0;
        'draws: for z in &self.z {
            let mut first_value = 0.0;
            for r in 0..m {
                let mut value = 0.0;
                for c in 0..m {
                    value += shape.factor[(r, c)] * z[c];
                }
                let coord = shape.active[r];
                if coord == 0 && skip_first {
                    first_value = value;
                } else if value > b[coord] {
                    continue 'draws;
                }
            }
            hits += 1;
            if let Some(out) = first.as_deref_mut() {
                out.push(first_value);
            }
        }
        hits
    }
}

/// Validated covariance with its active coordinates and sampling factor.
struct Shape {
    diagonal: bool,
    active: Vec<usize>,
    factor: DMatrix<f64>,
}

impl Shape {
    fn of(v: &Cov3) -> Result<Self> {
        let m = Matrix3::from_fn(|r, c| v[r][c]);
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("covariance", "contains a non-finite entry"));
        }
        if (m - m.transpose()).abs().max() > 1e-9 * (1.0 + m.abs().max()) {
            return Err(Error::param("covariance", "is not symmetric"));
        }
        let sym = (m + m.transpose()) * 0.5;
        let min_eigenvalue = SymmetricEigen::new(sym).eigenvalues.min();
        if min_eigenvalue < -PSD_TOLERANCE {
            return Err(Error::NotPsd { min_eigenvalue });
        }
        let diagonal = (0..3).all(|r| (0..3).all(|c| r == c || sym[(r, c)].abs() < DIAGONAL_TOLERANCE));
        let active: Vec<usize> = (0..3).filter(|&i| sym[(i, i)] >= DEGENERATE_VARIANCE).collect();
        let k = active.len();
        let sub = DMatrix::from_fn(k, k, |r, c| sym[(active[r], active[c])])
            + DMatrix::identity(k, k) * 1e-12;
        let factor = match sub.clone().cholesky() {
            Some(ch) => ch.l(),
            None => {
                // Tiny negative eigenvalues: factor through clipped eigenpairs.
                let eig = SymmetricEigen::new(sub);
                let root = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
                &eig.eigenvectors * root
            }
        };
        Ok(Self {
            diagonal,
            active,
            factor,
        })
    }
}

/// One-shot [`MvnEngine::lower_prob`].
pub fn mvn_lower_prob(v: &Cov3, b: [f64; 3], opts: &MvnOptions) -> Result<MvnEstimate> {
    MvnEngine::new(opts)?.lower_prob(v, b)
}

/// One-shot [`MvnEngine::min_feasible_b1`].
pub fn min_feasible_b1(
    v: &Cov3,
    b2: f64,
    b3: f64,
    epsilon: f64,
    opts: &MvnOptions,
) -> Result<Option<f64>> {
    MvnEngine::new(opts)?.min_feasible_b1(v, b2, b3, epsilon)
}
