//! Independent reference implementations used as oracles by the integration tests.
//!
//! Nothing here calls into the library's numerical code: losses, Voronoi cells, the
//! conditional density and the gating objective are rebuilt from their definitions
//! with plain loops, so agreement is evidence rather than tautology.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgmoe::{Atom, Model};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn random_atom(rng: &mut ChaCha8Rng, dim: usize) -> Atom {
    let omega1 = (0..dim).map(|_| uniform(rng, -3.0, 3.0)).collect();
    let a = (0..dim).map(|_| uniform(rng, -3.0, 3.0)).collect();
    Atom::new(
        uniform(rng, -2.0, 2.0),
        omega1,
        a,
        uniform(rng, -3.0, 3.0),
        uniform(rng, 0.2, 2.0),
    )
    .unwrap()
}

pub fn random_model(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> Model {
    Model::new(dim, (0..k).map(|_| random_atom(rng, dim)).collect()).unwrap()
}

/// A candidate near `truth`: every true atom gets at least one noisy copy, the rest
/// are assigned at random.
pub fn nearby_model(rng: &mut ChaCha8Rng, truth: &Model, k: usize, noise: f64) -> Model {
    let k0 = truth.len();
    let mut atoms = Vec::with_capacity(k);
    for l in 0..k {
        let src = if l < k0 { &truth.atoms()[l] } else { &truth.atoms()[rng.random_range(0..k0)] };
        let mut jitter = |v: f64| v + noise * uniform(rng, -1.0, 1.0);
        let omega0 = jitter(src.omega0) - if l >= k0 { 0.7 } else { 0.0 };
        let omega1 = src.omega1.iter().map(|&v| jitter(v)).collect();
        let a = src.a.iter().map(|&v| jitter(v)).collect();
        let b = jitter(src.b);
        let sigma = (src.sigma * (noise * uniform(rng, -1.0, 1.0)).exp()).max(1e-3);
        atoms.push(Atom::new(omega0, omega1, a, b, sigma).unwrap());
    }
    Model::new(truth.dim(), atoms).unwrap()
}

fn theta(a: &Atom) -> Vec<f64> {
    let mut t = a.omega1.clone();
    t.extend(&a.a);
    t.push(a.b);
    t.push(a.sigma);
    t
}

/// Nearest true atom for every fitted atom by exhaustive search (first index wins ties).
pub fn brute_cells(g: &Model, truth: &Model) -> Vec<Vec<usize>> {
    let mut cells = vec![Vec::new(); truth.len()];
    for (l, atom) in g.atoms().iter().enumerate() {
        let dists: Vec<f64> = truth
            .atoms()
            .iter()
            .map(|t| theta(atom).iter().zip(theta(t)).map(|(p, q)| (p - q).powi(2)).sum())
            .collect();
        let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let k = dists.iter().position(|&d| d == min).unwrap();
        cells[k].push(l);
    }
    cells
}

/// Puts `g` in the gauge of `truth`: equal total gate weight, equal weight-averaged slope.
pub fn aligned(g: &Model, truth: &Model) -> Model {
    let stats = |m: &Model| {
        let w: Vec<f64> = m.atoms().iter().map(|a| a.omega0.exp()).collect();
        let total: f64 = w.iter().sum();
        let mut mean = vec![0.0; m.dim()];
        for (a, wi) in m.atoms().iter().zip(&w) {
            for d in 0..m.dim() {
                mean[d] += wi / total * a.omega1[d];
            }
        }
        (total, mean)
    };
    let (wg, mg) = stats(g);
    let (w0, m0) = stats(truth);
    let atoms = g
        .atoms()
        .iter()
        .map(|a| {
            let omega1 = a.omega1.iter().zip(mg.iter().zip(&m0)).map(|(v, (p, q))| v - p + q).collect();
            Atom::new(a.omega0 + (w0 / wg).ln(), omega1, a.a.clone(), a.b, a.sigma).unwrap()
        })
        .collect();
    Model::new(g.dim(), atoms).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rbar(m: usize) -> f64 {
    match m {
        2 => 4.0,
        3 => 6.0,
        _ => 7.0,
    }
}

/// Loss integrand at a fixed translation, for `kind` in `{"vde", "vdo", "vdfra"}`.
/// `g` must already be aligned and `cells` computed on the aligned model.
pub fn integrand(kind: &str, g: &Model, truth: &Model, cells: &[Vec<usize>], t0: f64, t1: &[f64]) -> f64 {
    let dim = truth.dim();
    let mut total = 0.0;
    for (k, cell) in cells.iter().enumerate() {
        let t = &truth.atoms()[k];
        let mass: f64 = cell.iter().map(|&l| g.atoms()[l].omega0.exp()).sum();
        total += (mass - (t.omega0 + t0).exp()).abs();
        let gap = |a: &Atom| -> Vec<f64> { (0..dim).map(|d| a.omega1[d] - t.omega1[d] - t1[d]).collect() };
        if cell.len() == 1 {
            let a = &g.atoms()[cell[0]];
            let mut v = gap(a);
            v.extend(a.a.iter().zip(&t.a).map(|(p, q)| p - q));
            v.push(a.b - t.b);
            v.push(a.sigma - t.sigma);
            total += a.omega0.exp() * norm(&v);
            continue;
        }
        if cell.len() < 2 || kind == "vde" {
            continue;
        }
        let r = rbar(cell.len());
        for &l in cell {
            let a = &g.atoms()[l];
            let mut gate = gap(a);
            gate.push(a.b - t.b);
            let mut expert: Vec<f64> = a.a.iter().zip(&t.a).map(|(p, q)| p - q).collect();
            expert.push(a.sigma - t.sigma);
            total += a.omega0.exp() * (norm(&gate).powf(r) + norm(&expert).powf(r / 2.0));
        }
        if kind == "vdo" {
            continue;
        }
        let (mut mb, mut ms) = (0.0, 0.0);
        let mut mw = vec![0.0; dim];
        let mut ma = vec![0.0; dim];
        let mut mww = vec![0.0; dim * dim];
        for &l in cell {
            let a = &g.atoms()[l];
            let w = a.omega0.exp();
            let dw = gap(a);
            let db = a.b - t.b;
            mb += w * db;
            ms += w * (db * db + a.sigma - t.sigma);
            for d in 0..dim {
                mw[d] += w * dw[d];
                ma[d] += w * (dw[d] * db + a.a[d] - t.a[d]);
                for e in 0..dim {
                    mww[d * dim + e] += w * dw[d] * dw[e];
                }
            }
        }
        total += mb.abs() + norm(&mw) + ms.abs() + norm(&ma) + norm(&mww);
    }
    total
}

/// Brute-force infimum over `(t0, t1) in R x R` (one covariate): a `grid x grid`
/// sweep of `[-half, half]^2` followed by a local pattern search from each of the
/// best few grid points.
pub fn grid_infimum(f: impl Fn(f64, f64) -> f64, half: f64, grid: usize) -> (f64, f64, f64) {
    let step = 2.0 * half / (grid - 1) as f64;
    let mut pts: Vec<(f64, f64, f64)> = Vec::with_capacity(grid * grid);
    for i in 0..grid {
        let t0 = -half + i as f64 * step;
        for j in 0..grid {
            let t1 = -half + j as f64 * step;
            pts.push((f(t0, t1), t0, t1));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = pts[0];
    for &(v, c0, c1) in pts.iter().take(8) {
        // Pattern search on a 21 x 21 stencil: re-centre while the stencil improves,
        // halve it when it does not.
        let (mut c0, mut c1, mut cv, mut h) = (c0, c1, v, 2.0 * step);
        let mut rounds = 0;
        while h > 1e-11 && rounds < 2000 {
            rounds += 1;
            let n = 20;
            let s = 2.0 * h / n as f64;
            let mut moved = false;
            for i in 0..=n {
                for j in 0..=n {
                    let (p0, p1) = (c0 - h + i as f64 * s, c1 - h + j as f64 * s);
                    let fv = f(p0, p1);
                    if fv < cv {
                        (cv, c0, c1) = (fv, p0, p1);
                        moved = true;
                    }
                }
            }
            if !moved {
                h /= 2.0;
            }
        }
        if cv < best.0 {
            best = (cv, c0, c1);
        }
    }
    best
}

/// Oracle value of a loss for one-covariate models.
pub fn oracle_loss(kind: &str, g: &Model, truth: &Model, grid: usize) -> f64 {
    let g = aligned(g, truth);
    let cells = brute_cells(&g, truth);
    grid_infimum(|t0, t1| integrand(kind, &g, truth, &cells, t0, &[t1]), 4.0, grid).0
}

/// Conditional density `p(y | x)` from its definition.
pub fn density(g: &Model, x: &[f64], y: f64) -> f64 {
    let scores: Vec<f64> = g
        .atoms()
        .iter()
        .map(|a| a.omega0 + a.omega1.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect();
    let z: f64 = scores.iter().map(|s| s.exp()).sum();
    g.atoms()
        .iter()
        .zip(&scores)
        .map(|(a, s)| {
            let mean = a.b + a.a.iter().zip(x).map(|(c, v)| c * v).sum::<f64>();
            s.exp() / z * (-(y - mean).powi(2) / (2.0 * a.sigma)).exp() / (2.0 * std::f64::consts::PI * a.sigma).sqrt()
        })
        .sum()
}

/// Composite Simpson rule on `[lo, hi]` with `intervals` (even) pieces.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, intervals: usize) -> f64 {
    let h = (hi - lo) / intervals as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..intervals {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// The five merged moments of a set of atoms, flattened:
/// `sum w`, `sum w omega1`, `sum w b`, `sum w (b^2 + sigma)`, `sum w (omega1 b + a)`,
/// together with the matching sums of absolute values (the scale each is computed at).
pub fn moments(atoms: &[&Atom]) -> (Vec<f64>, Vec<f64>) {
    let dim = atoms[0].omega1.len();
    let mut m = vec![0.0; 3 + 2 * dim];
    let mut scale = vec![0.0; 3 + 2 * dim];
    for a in atoms {
        let w = a.omega0.exp();
        let mut add = |i: usize, v: f64| {
            m[i] += w * v;
            scale[i] += (w * v).abs();
        };
        add(0, 1.0);
        add(1, a.b);
        add(2, a.b * a.b + a.sigma);
        for d in 0..dim {
            add(3 + d, a.omega1[d]);
            add(3 + dim + d, a.omega1[d] * a.b + a.a[d]);
        }
    }
    (m, scale)
}

/// Gradient ascent on the gating objective with a backtracking line search: a slow
/// but simple reference for the Newton solver. The last gate stays pinned at zero.
pub fn gating_gradient_ascent(xs: &[f64], dim: usize, resp: &[f64], k: usize, iters: usize) -> (Vec<f64>, Vec<f64>) {
    let n = resp.len() / k;
    let objective = |w0: &[f64], w1: &[f64]| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            let x = &xs[i * dim..(i + 1) * dim];
            let s: Vec<f64> = (0..k).map(|c| w0[c] + (0..dim).map(|d| w1[c * dim + d] * x[d]).sum::<f64>()).collect();
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for c in 0..k {
                total += resp[i * k + c] * (s[c] - lse);
            }
        }
        total
    };
    let mut w0 = vec![0.0; k];
    let mut w1 = vec![0.0; k * dim];
    let mut step = 1.0;
    for _ in 0..iters {
        let mut g0 = vec![0.0; k];
        let mut g1 = vec![0.0; k * dim];
        for i in 0..n {
            let x = &xs[i * dim..(i + 1) * dim];
            let s: Vec<f64> = (0..k).map(|c| w0[c] + (0..dim).map(|d| w1[c * dim + d] * x[d]).sum::<f64>()).collect();
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = s.iter().map(|v| (v - m).exp()).sum();
            for c in 0..k - 1 {
                let diff = resp[i * k + c] - (s[c] - m).exp() / z;
                g0[c] += diff;
                for d in 0..dim {
                    g1[c * dim + d] += diff * x[d];
                }
            }
        }
        let current = objective(&w0, &w1);
        step *= 2.0;
        loop {
            let t0: Vec<f64> = w0.iter().zip(&g0).map(|(w, g)| w + step * g).collect();
            let t1: Vec<f64> = w1.iter().zip(&g1).map(|(w, g)| w + step * g).collect();
            if objective(&t0, &t1) >= current || step < 1e-14 {
                w0 = t0;
                w1 = t1;
                break;
            }
            step /= 2.0;
        }
    }
    (w0, w1)
}
