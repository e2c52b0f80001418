//! Lagrange-multiplier grid sweeps and Pareto filtering.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::JointSourceModel;
use crate::solver::{solve, BaSolution, SolveOptions};

/// Points closer than this in every coordinate count as duplicates.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

/// One grid cell and its solver outcome.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub lambda: f64,
    pub mu: f64,
    pub outcome: Result<BaSolution>,
}

/// All cells in grid order (λ outer, μ inner) and the indices of the
/// Pareto-optimal solutions among them.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub cells: Vec<SweepCell>,
    pub pareto: Vec<usize>,
}

impl Sweep {
    pub fn pareto_solutions(&self) -> impl Iterator<Item = &BaSolution> {
        self.pareto.iter().map(|&i| {
            self.cells[i]
                .outcome
                .as_ref()
                .expect("Pareto indices refer to successful cells")
        })
    }

    /// Every successful solution in grid order.
    pub fn solutions(&self) -> impl Iterator<Item = &BaSolution> {
        self.cells.iter().filter_map(|c| c.outcome.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepCell> {
        self.cells.iter().filter(|c| c.outcome.is_err())
    }
}

/// Rate with round-off below zero removed.
pub fn clamp_rate(rate: f64) -> f64 {
    if rate > -1e-9 {
        rate.max(0.0)
    } else {
        rate
    }
}

/// Solves every `(λ, μ)` pair in parallel and Pareto-filters the results in
/// `(rate, dist_x, dist_s)`. Individual failures are kept in the cell list.
pub fn sweep_lagrange_grid(
    model: &JointSourceModel,
    lambda_grid: &[f64],
    mu_grid: &[f64],
    opts: &SolveOptions,
) -> Result<Sweep> {
    for (name, grid) in [("lambda_grid", lambda_grid), ("mu_grid", mu_grid)] {
        if grid.is_empty() {
            return Err(Error::param(name, "grid is empty"));
        }
        if let Some(v) = grid.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::param(name, format!("{v} is not finite and >= 0")));
        }
    }
    let pairs: Vec<(f64, f64)> = lambda_grid
        .iter()
        .flat_map(|&l| mu_grid.iter().map(move |&m| (l, m)))
        .collect();
    let cells: Vec<SweepCell> = pairs
        .par_iter()
        .map(|&(lambda, mu)| SweepCell {
            lambda,
            mu,
            outcome: solve(model, lambda, mu, opts),
        })
        .collect();

    let ok: Vec<(usize, [f64; 3])> = cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            c.outcome
                .as_ref()
                .ok()
                .map(|s| (i, [clamp_rate(s.rate), s.dist_x, s.dist_s]))
        })
        .collect();
    let points: Vec<[f64; 3]> = ok.iter().map(|p| p.1).collect();
    let pareto = pareto_indices(&points).into_iter().map(|k| ok[k].0).collect();
    Ok(Sweep { cells, pareto })
}

/// Indices of the non-dominated points after dropping near-duplicates
/// (the first occurrence is kept). A point is dominated when another is
/// no larger in every coordinate and smaller in at least one.
pub fn pareto_indices(points: &[[f64; 3]]) -> Vec<usize> {
    let mut unique: Vec<usize> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let duplicate = unique.iter().any(|&j| {
            points[j]
                .iter()
                .zip(p)
                .all(|(a, b)| (a - b).abs() <= DUPLICATE_TOLERANCE)
        });
        if !duplicate {
            unique.push(i);
        }
    }
    let dominates = |a: &[f64; 3], b: &[f64; 3]| {
        a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
    };
    unique
        .iter()
        .copied()
        .filter(|&i| !unique.iter().any(|&j| j != i && dominates(&points[j], &points[i])))
        .collect()
}
