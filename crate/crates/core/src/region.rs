//! Asymptotic and finite-blocklength achievable regions assembled from a
//! set of solved test channels.
//!
//! The asymptotic rate at `(D, D_s)` is the smallest rate among candidates
//! whose distortions do not exceed the levels. The finite-blocklength rate
//! at `(n, ε, D, D_s)` is the smallest second-order rate over all
//! candidates, each evaluated with its own moments.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dispersion::{
    exact_moments, log_penalty, second_order_rate_from_moments, slack_thresholds,
    MomentSummary, MvnEngine, MvnOptions, DEGENERATE_VARIANCE,
};
use crate::error::Result;
use crate::model::JointSourceModel;
use crate::solver::BaSolution;
use crate::sweep::clamp_rate;

/// One row of a region table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub rate: f64,
    pub dist_x: f64,
    pub dist_s: f64,
    pub lambda: f64,
    pub mu: f64,
    pub n: Option<u64>,
    pub epsilon: Option<f64>,
    pub second_order_rate: Option<f64>,
    pub theorem3_bound: Option<f64>,
    pub feasible: bool,
}

impl RegionPoint {
    pub fn asymptotic(sol: &BaSolution) -> Self {
        Self {
            rate: clamp_rate(sol.rate),
            dist_x: sol.dist_x,
            dist_s: sol.dist_s,
            lambda: sol.lambda,
            mu: sol.mu,
            n: None,
            epsilon: None,
            second_order_rate: None,
            theorem3_bound: None,
            feasible: true,
        }
    }
}

struct Candidate {
    rate: f64,
    dist_x: f64,
    dist_s: f64,
    moments: MomentSummary,
}

/// Finite-blocklength rate at a point together with the candidate achieving it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteRate {
    pub rate: f64,
    /// Index into the candidate list passed to [`RegionEvaluator::new`].
    pub candidate: usize,
}

/// Evaluates achievable rates over a fixed candidate set, sharing one bank
/// of normal draws across every query.
pub struct RegionEvaluator {
    candidates: Vec<Candidate>,
    engine: MvnEngine,
    normal: Normal,
}

impl RegionEvaluator {
    pub fn new<'a>(
        model: &JointSourceModel,
        solutions: impl IntoIterator<Item = &'a BaSolution>,
        mvn: &MvnOptions,
    ) -> Result<Self> {
        let candidates = solutions
            .into_iter()
            .map(|s| Candidate {
                rate: clamp_rate(s.rate),
                dist_x: s.dist_x,
                dist_s: s.dist_s,
                moments: exact_moments(model, &s.channel, &s.recon),
            })
            .collect();
        Ok(Self {
            candidates,
            engine: MvnEngine::new(mvn)?,
            normal: Normal::standard(),
        })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn moments(&self, candidate: usize) -> &MomentSummary {
        &self.candidates[candidate].moments
    }

    /// Smallest candidate rate meeting both levels, if any.
    pub fn asymptotic_rate(&self, d: f64, d_s: f64) -> Option<f64> {
        self.candidates
            .iter()
            .filter(|c| c.dist_x <= d && c.dist_s <= d_s)
            .map(|c| c.rate)
            .min_by(f64::total_cmp)
    }

    /// Smallest second-order rate over the candidates, or `None` when no
    /// candidate meets the levels at this blocklength.
    ///
    /// Candidates are visited in order of a Gaussian lower bound on their
    /// rate, and the scan stops once the bound exceeds the best rate found.
    pub fn finite_rate(&self, n: u64, epsilon: f64, d: f64, d_s: f64) -> Result<Option<FiniteRate>> {
        let root = (n as f64).sqrt();
        let quantile = self.normal.inverse_cdf(1.0 - epsilon);
        let target = 1.0 - epsilon;

        let mut order: Vec<(usize, f64)> = Vec::new();
        for (i, c) in self.candidates.iter().enumerate() {
            let v = &c.moments.v_cov;
            let (b2, b3) = slack_thresholds(&c.moments, n, d, d_s);
            // Each distortion constraint alone must clear the target.
            if !self.marginal_may_hold(v[1][1], b2, target)
                || !self.marginal_may_hold(v[2][2], b3, target)
            {
                continue;
            }
            let sigma = v[0][0].max(0.0).sqrt();
            let margin = 0.05 * sigma;
            let lower = c.moments.j_mean[0] + (sigma * quantile - margin) / root + log_penalty(n);
            order.push((i, lower));
        }
        order.sort_by(|a, b| a.1.total_cmp(&b.1));

        let mut best: Option<FiniteRate> = None;
        for (i, lower) in order {
            if best.is_some_and(|b| lower >= b.rate) {
                break;
            }
            let c = &self.candidates[i];
            if let Some(rate) =
                second_order_rate_from_moments(&c.moments, n, epsilon, d, d_s, &self.engine)?
            {
                if best.is_none_or(|b| rate < b.rate) {
                    best = Some(FiniteRate { rate, candidate: i });
                }
            }
        }
        Ok(best)
    }

    /// Loose necessary condition `P[B ≤ b] ≥ target` for one coordinate,
    /// widened so that sampling noise never discards a feasible candidate.
    fn marginal_may_hold(&self, variance: f64, b: f64, target: f64) -> bool {
        if variance < DEGENERATE_VARIANCE {
            return b >= 0.0;
        }
        self.normal.cdf(b / variance.sqrt()) >= target - 0.01
    }
}
