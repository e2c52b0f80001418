//! Structural properties of the solver and the swept region.

mod support;

use iwz_core::solver::{evaluate_rate, initial_channel, solve_from};
use iwz_core::sweep::clamp_rate;
use iwz_core::{solve, sweep_lagrange_grid, JointSourceModel, SolveOptions};
use proptest::prelude::*;
use support::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lagrangian_never_increases(
        seed in 0u64..1000,
        ns in 2usize..4, nx in 2usize..5, ny in 2usize..4,
        lambda in 0.0f64..6.0, mu in 0.0f64..6.0, start in 0usize..4,
    ) {
        let m = random_model(seed, ns, nx, ny);
        let init = initial_channel(nx, nx + 1, seed, start);
        let sol = solve_from(&m, init, lambda, mu, 60, 1e-14).unwrap();
        for w in sol.trace.windows(2) {
            prop_assert!(w[1].lagrangian <= w[0].lagrangian + 1e-9);
        }
        prop_assert!(sol.trace.iter().all(|r| r.rate >= -1e-9));
    }

    #[test]
    fn rate_is_nonnegative(seed in 0u64..1000, nx in 2usize..6, ny in 2usize..5, nu in 1usize..7, start in 0usize..6) {
        let m = random_model(seed, 2, nx, ny);
        let c = initial_channel(nx, nu, seed ^ 0xA5, start);
        prop_assert!(evaluate_rate(&m, &c) >= -1e-9);
    }
}

fn tiny_sweep(grid: &[f64]) -> Vec<(f64, f64, f64)> {
    let m = JointSourceModel::tiny_dsbs();
    let sw = sweep_lagrange_grid(&m, grid, grid, &SolveOptions::default()).unwrap();
    sw.pareto_solutions()
        .map(|s| (clamp_rate(s.rate), s.dist_x, s.dist_s))
        .collect()
}

#[test]
fn pareto_points_lie_on_a_convex_nonincreasing_surface() {
    let pts = tiny_sweep(&[0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0]);
    assert!(pts.len() >= 5);
    let mut worst: f64 = 0.0;
    for p in &pts {
        for q in &pts {
            for t in [0.25, 0.5, 0.75] {
                let chord = t * p.0 + (1.0 - t) * q.0;
                let d = t * p.1 + (1.0 - t) * q.1;
                let ds = t * p.2 + (1.0 - t) * q.2;
                for r in pts.iter().filter(|r| r.1 >= d && r.2 >= ds) {
                    worst = worst.max(r.0 - chord);
                }
            }
        }
    }
    assert!(worst <= 5e-3, "chord violation {worst}");
}

#[test]
fn joint_rate_is_sandwiched_by_single_constraint_rates() {
    let m = JointSourceModel::tiny_dsbs();
    let opts = SolveOptions::default();
    let fine: Vec<f64> = (0..40).map(|k| 0.05 * 1.2f64.powi(k)).chain([0.0]).collect();
    let only_x: Vec<(f64, f64)> = fine
        .iter()
        .map(|&l| solve(&m, l, 0.0, &opts).unwrap())
        .map(|s| (s.dist_x, clamp_rate(s.rate)))
        .collect();
    let only_s: Vec<(f64, f64)> = fine
        .iter()
        .map(|&mu| solve(&m, 0.0, mu, &opts).unwrap())
        .map(|s| (s.dist_s, clamp_rate(s.rate)))
        .collect();

    let mut checked = 0;
    for (rate, d, ds) in tiny_sweep(&[0.0, 0.5, 1.0, 2.0, 4.0]) {
        let (Some(rx), Some(rs)) = (hull_rate(&only_x, d), hull_rate(&only_s, ds)) else {
            continue;
        };
        assert!(rate >= rx.max(rs) - 5e-3, "lower: {rate} vs {rx}, {rs} at ({d}, {ds})");
        assert!(rate <= rx + rs + 5e-3, "upper: {rate} vs {rx} + {rs} at ({d}, {ds})");
        checked += 1;
    }
    assert!(checked >= 5, "only {checked} points inside the single-constraint ranges");
}

#[test]
fn mixture_traces_descend() {
    let p = iwz_core::GaussianMixtureParams::classification_default().with_grid(20, -10.0, 10.0);
    let m = JointSourceModel::gaussian_mixture(&p).unwrap();
    for &(l, mu) in &[(0.3, 1.0), (3.0, 0.2), (1.0, 5.0)] {
        for start in 0..4 {
            let sol = solve_from(&m, initial_channel(20, 21, 42, start), l, mu, 100, 1e-12).unwrap();
            for w in sol.trace.windows(2) {
                assert!(w[1].lagrangian <= w[0].lagrangian + 1e-9);
            }
        }
    }
}

#[test]
fn solutions_are_bit_identical_across_runs() {
    let p = iwz_core::GaussianMixtureParams::classification_default().with_grid(12, -6.0, 6.0);
    let m = JointSourceModel::gaussian_mixture(&p).unwrap();
    let a = sweep_lagrange_grid(&m, &[0.5, 2.0], &[0.5, 2.0], &SolveOptions::default()).unwrap();
    let b = sweep_lagrange_grid(&m, &[0.5, 2.0], &[0.5, 2.0], &SolveOptions::default()).unwrap();
    let sa: Vec<_> = a.solutions().collect();
    let sb: Vec<_> = b.solutions().collect();
    assert_eq!(sa, sb);
    assert_eq!(a.pareto, b.pareto);
}
