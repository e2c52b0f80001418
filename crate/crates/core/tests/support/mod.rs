//! Independent reference computations shared by integration tests.
#![allow(dead_code)]

use iwz_core::solver::initial_channel;
use iwz_core::{JointSourceModel, ReconstructionMap, TestChannel};

fn entropy(v: &[f64]) -> f64 {
    v.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
}

/// `I(X;U) - I(U;Y)` in bits via marginal entropies of the enumerated joint.
pub fn rate_by_entropies(m: &JointSourceModel, ch: &[Vec<f64>]) -> f64 {
    let (nx, ny, nu) = (m.x_len(), m.y_len(), ch[0].len());
    let mut pu = vec![0.0; nu];
    let mut pxu = vec![0.0; nx * nu];
    let mut pyu = vec![0.0; ny * nu];
    for x in 0..nx {
        for y in 0..ny {
            for u in 0..nu {
                let p = m.p_xy()[[x, y]] * ch[x][u];
                pu[u] += p;
                pxu[x * nu + u] += p;
                pyu[y * nu + u] += p;
            }
        }
    }
    let (hx, hy, hu) = (entropy(m.p_x()), entropy(m.p_y()), entropy(&pu));
    (hx + hu - entropy(&pxu)) - (hy + hu - entropy(&pyu))
}

/// Expected `(d, d_s)` by summing the full `(s, x, y, u)` joint.
pub fn distortions_by_enumeration(
    m: &JointSourceModel,
    ch: &[Vec<f64>],
    x_hat: impl Fn(usize, usize) -> usize,
    s_hat: impl Fn(usize, usize) -> usize,
) -> (f64, f64) {
    let mut dx = 0.0;
    let mut ds = 0.0;
    for s in 0..m.s_len() {
        for x in 0..m.x_len() {
            for y in 0..m.y_len() {
                for (u, &pu) in ch[x].iter().enumerate() {
                    let p = m.p_sxy()[[s, x, y]] * pu;
                    dx += p * m.d_x()[[x, x_hat(u, y)]];
                    ds += p * m.d_s()[[s, s_hat(u, y)]];
                }
            }
        }
    }
    (dx, ds)
}

pub fn channel_rows(c: &TestChannel) -> Vec<Vec<f64>> {
    c.as_array().rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Every channel on the step-`1/steps` simplex grid for a binary `X` and
/// ternary `U`, with its rate and the smallest distortions over all 64
/// binary decoder maps of each kind: `(rate bits, min E d, min E d_s)`.
pub fn binary_grid_table(m: &JointSourceModel, steps: usize) -> Vec<(f64, f64, f64)> {
    assert_eq!((m.x_len(), m.y_len(), m.x_hat_len(), m.s_hat_len()), (2, 2, 2, 2));
    let mut rows = Vec::new();
    for a in 0..=steps {
        for b in 0..=steps - a {
            rows.push([a, b, steps - a - b].map(|k| k as f64 / steps as f64));
        }
    }
    let maps: Vec<[[usize; 2]; 3]> = (0u32..64)
        .map(|bits| {
            let mut g = [[0; 2]; 3];
            for (u, row) in g.iter_mut().enumerate() {
                for (y, v) in row.iter_mut().enumerate() {
                    *v = ((bits >> (2 * u + y)) & 1) as usize;
                }
            }
            g
        })
        .collect();

    let mut out = Vec::with_capacity(rows.len() * rows.len());
    for r0 in &rows {
        for r1 in &rows {
            let ch = vec![r0.to_vec(), r1.to_vec()];
            let rate = rate_by_entropies(m, &ch);
            let mut best_dx = f64::INFINITY;
            let mut best_ds = f64::INFINITY;
            for g in &maps {
                let (dx, ds) = distortions_by_enumeration(m, &ch, |u, y| g[u][y], |u, y| g[u][y]);
                best_dx = best_dx.min(dx);
                best_ds = best_ds.min(ds);
            }
            out.push((rate, best_dx, best_ds));
        }
    }
    out
}

/// Smallest grid rate with both distortions at most the given levels.
pub fn grid_min_rate(table: &[(f64, f64, f64)], d: f64, ds: f64) -> f64 {
    table
        .iter()
        .filter(|t| t.1 <= d + 1e-12 && t.2 <= ds + 1e-12)
        .map(|t| t.0)
        .fold(f64::INFINITY, f64::min)
}

/// Smallest grid Lagrangian `rate·ln 2 + λ d + μ d_s` (nats).
pub fn grid_min_lagrangian(table: &[(f64, f64, f64)], lambda: f64, mu: f64) -> f64 {
    table
        .iter()
        .map(|t| t.0 * std::f64::consts::LN_2 + lambda * t.1 + mu * t.2)
        .fold(f64::INFINITY, f64::min)
}

/// Classical Wyner-Ziv alternating minimization with a single multiplier
/// `beta` on `E d(X, X̂)`, written with plain vectors. Starts from the
/// library's initial channel `start`; returns `(rate bits, E d)`.
pub fn classical_wz(
    m: &JointSourceModel,
    beta: f64,
    u_len: usize,
    seed: u64,
    start: usize,
    iters: usize,
) -> (f64, f64, f64) {
    let (nx, ny) = (m.x_len(), m.y_len());
    let init = initial_channel(nx, u_len, seed, start);
    let mut ch = channel_rows(&init);
    let pxy = |x: usize, y: usize| m.p_xy()[[x, y]];
    let decoder = |ch: &[Vec<f64>]| -> Vec<Vec<usize>> {
        (0..u_len)
            .map(|u| {
                (0..ny)
                    .map(|y| {
                        let cost = |xh: usize| -> f64 {
                            (0..nx).map(|x| pxy(x, y) * ch[x][u] * m.d_x()[[x, xh]]).sum()
                        };
                        let mut best = 0;
                        for xh in 1..m.x_hat_len() {
                            if cost(xh) < cost(best) {
                                best = xh;
                            }
                        }
                        best
                    })
                    .collect()
            })
            .collect()
    };
    let mut g = decoder(&ch);
    let mut prev_l = f64::INFINITY;
    for _ in 0..iters {
        // q(u|y) ∝ Σ_x P(x,y) P(u|x)
        let q: Vec<Vec<f64>> = (0..ny)
            .map(|y| {
                let col: Vec<f64> =
                    (0..u_len).map(|u| (0..nx).map(|x| pxy(x, y) * ch[x][u]).sum()).collect();
                let z: f64 = col.iter().sum();
                col.into_iter().map(|v| v / z).collect()
            })
            .collect();
        for x in 0..nx {
            let px: f64 = (0..ny).map(|y| pxy(x, y)).sum();
            let mut w: Vec<f64> = (0..u_len)
                .map(|u| {
                    (0..ny)
                        .filter(|&y| pxy(x, y) > 0.0)
                        .map(|y| {
                            pxy(x, y) / px * (q[y][u].ln() - beta * m.d_x()[[x, g[u][y]]])
                        })
                        .sum::<f64>()
                })
                .collect();
            let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            w.iter_mut().for_each(|v| *v = (*v - max).exp());
            let z: f64 = w.iter().sum();
            ch[x] = w.into_iter().map(|v| v / z).collect();
        }
        g = decoder(&ch);
        let rate = rate_by_entropies(m, &ch);
        let (d, _) = distortions_by_enumeration(m, &ch, |u, y| g[u][y], |_, _| 0);
        let l = rate * std::f64::consts::LN_2 + beta * d;
        if (prev_l - l).abs() < 1e-14 {
            break;
        }
        prev_l = l;
    }
    let rate = rate_by_entropies(m, &ch);
    let (d, _) = distortions_by_enumeration(m, &ch, |u, y| g[u][y], |_, _| 0);
    (rate, d, rate * std::f64::consts::LN_2 + beta * d)
}

/// `S = X` uniform binary, `Y = X ⊕ Bern(flip)`, Hamming on both sides.
pub fn copy_model(flip: f64) -> JointSourceModel {
    JointSourceModel::binary_chain(0.0, flip)
}

/// Closed-form Wyner-Ziv function of the doubly symmetric binary source
/// with crossover `p`: the lower convex envelope of
/// `h(p ⋆ D) - h(D)` on `[0, p]` and the point `(p, 0)`.
pub fn dsbs_wyner_ziv(p: f64, d: f64) -> f64 {
    let h = |t: f64| entropy(&[t, 1.0 - t]);
    let g = |t: f64| h(p * (1.0 - t) + t * (1.0 - p)) - h(t);
    if d >= p {
        return 0.0;
    }
    // Envelope: mix (t, g(t)) for t ≤ d with (p, 0); search t finely.
    let mut best = g(d);
    let n = 20_000;
    for i in 0..n {
        let t = d * i as f64 / n as f64;
        let theta = (p - d) / (p - t);
        best = best.min(theta * g(t));
    }
    best
}

/// The decoder map as closures.
pub fn recon_fns(g: &ReconstructionMap) -> (impl Fn(usize, usize) -> usize + '_, impl Fn(usize, usize) -> usize + '_) {
    (move |u, y| g.x_hat(u, y), move |u, y| g.s_hat(u, y))
}

/// Random model with the given alphabet sizes; distortions in `[0, 1]`.
pub fn random_model(seed: u64, ns: usize, nx: usize, ny: usize) -> JointSourceModel {
    use iwz_core::{ModelTables, Symbol};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![vec![vec![0.0; ny]; nx]; ns];
    let mut total = 0.0;
    for plane in p.iter_mut() {
        for row in plane.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.random::<f64>() + 0.01;
                total += *v;
            }
        }
    }
    p.iter_mut().flatten().flatten().for_each(|v| *v /= total);
    let table = |r: usize, c: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..r).map(|_| (0..c).map(|_| rng.random::<f64>()).collect()).collect()
    };
    let labels = |k: usize| (0..k).map(|i| Symbol::Value(i as f64)).collect::<Vec<_>>();
    let d_x = table(nx, nx, &mut rng);
    let d_s = table(ns, ns, &mut rng);
    JointSourceModel::from_tables(ModelTables {
        s_alphabet: labels(ns),
        x_alphabet: labels(nx),
        y_alphabet: labels(ny),
        s_hat_alphabet: labels(ns),
        x_hat_alphabet: labels(nx),
        p_sxy: p,
        d_x,
        d_s,
    })
    .unwrap()
}

/// Piecewise-linear lower convex hull of `(distortion, rate)` points,
/// evaluated at `d`; flat beyond the largest distortion, `None` below the
/// smallest.
pub fn hull_rate(points: &[(f64, f64)], d: f64) -> Option<f64> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let first = hull.first()?;
    if d < first.0 {
        return None;
    }
    for w in hull.windows(2) {
        if d <= w[1].0 {
            let t = (d - w[0].0) / (w[1].0 - w[0].0);
            return Some(w[0].1 + t * (w[1].1 - w[0].1));
        }
    }
    Some(hull.last().unwrap().1)
}
