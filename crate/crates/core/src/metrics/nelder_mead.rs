//! Derivative-free minimisation for the translation infimum.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Evaluation budget per run.
    pub max_evals: usize,
    /// A run has converged when every vertex is within this distance of the best one.
    pub tol: f64,
    /// Edge length of the starting simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 10_000,
            tol: 1e-9,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum<T> {
    pub point: Vec<T>,
    pub value: T,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder–Mead with the standard coefficients (reflect 1, expand 2, contract 1/2, shrink 1/2).
/// Non-finite objective values are treated as `+inf`.
pub fn nelder_mead<T: Scalar, F: FnMut(&[T]) -> T>(mut f: F, x0: &[T], opts: &NelderMeadOptions) -> Minimum<T> {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[T], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    };
    let tol = T::c(opts.tol).max(T::epsilon() * T::c(16.0));
    let step = T::c(opts.initial_step);

    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    if n == 0 {
        return Minimum { point: vec![], value: v0, evaluations: evals, converged: true };
    }

    let half = T::c(0.5);
    let two = T::c(2.0);
    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum::<T>()
                    .sqrt()
            })
            .fold(T::zero(), T::max);
        if diameter < tol {
            converged = true;
            break;
        }

        let nf = T::from_usize(n).unwrap();
        let mut centroid = vec![T::zero(); n];
        for (x, _) in &simplex[..n] {
            for (c, &xi) in centroid.iter_mut().zip(x) {
                *c += xi / nf;
            }
        }
        let worst = simplex[n].clone();
        let along = |coef: T| -> Vec<T> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(&c, &w)| c + coef * (c - w))
                .collect()
        };

        let reflected = along(T::one());
        let fr = eval(&reflected, &mut evals);
        if fr < simplex[0].1 {
            let expanded = along(two);
            let fe = eval(&expanded, &mut evals);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr < worst.1 {
            let c = along(half);
            let v = eval(&c, &mut evals);
            (c, v)
        } else {
            let c = along(-half);
            let v = eval(&c, &mut evals);
            (c, v)
        };
        if fc < worst.1.min(fr) {
            simplex[n] = (contracted, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<T> = best
                .iter()
                .zip(&vertex.0)
                .map(|(&b, &v)| b + half * (v - b))
                .collect();
            let v = eval(&x, &mut evals);
            *vertex = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (point, value) = simplex.swap_remove(0);
    Minimum { point, value, evaluations: evals, converged }
}
