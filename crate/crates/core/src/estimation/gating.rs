//! Gating M-step: damped Newton (IRLS) on the soft-label multinomial logistic objective
//!
//! ```text
//! Q(w) = sum_n sum_k r_nk * log softmax_k(omega1_k . x_n + omega0_k)
//! ```
//!
//! The last gate is pinned at zero, so the free parameters are the first `K - 1`
//! gates and `Q` is concave in them.

use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::model::MixingMeasure;
use crate::scalar::Scalar;

/// Gate parameters for `k` experts; `omega1` is row-major `k x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gates<T> {
    pub k: usize,
    pub dim: usize,
    pub omega0: Vec<T>,
    pub omega1: Vec<T>,
}

impl<T: Scalar> Gates<T> {
    pub fn from_measure(g: &MixingMeasure<T>) -> Self {
        let omega0 = g.atoms().iter().map(|a| a.omega0).collect();
        let omega1 = g.atoms().iter().flat_map(|a| a.omega1.iter().copied()).collect();
        Gates {
            k: g.len(),
            dim: g.dim(),
            omega0,
            omega1,
        }
    }

    pub fn slope(&self, k: usize) -> &[T] {
        &self.omega1[k * self.dim..(k + 1) * self.dim]
    }

    /// Subtracts the last gate from all gates; the objective is unchanged.
    pub fn normalize_baseline(&mut self) {
        let last = self.k - 1;
        let t0 = self.omega0[last];
        let t1: Vec<T> = self.slope(last).to_vec();
        for k in 0..self.k {
            self.omega0[k] -= t0;
            for d in 0..self.dim {
                self.omega1[k * self.dim + d] -= t1[d];
            }
        }
    }

    fn score(&self, k: usize, x: &[T]) -> T {
        let mut s = self.omega0[k];
        for (w, xi) in self.slope(k).iter().zip(x) {
            s += *w * *xi;
        }
        s
    }

    /// Gate probabilities at `x` written into `out`; returns the log normaliser.
    fn probs_into(&self, x: &[T], out: &mut [T]) -> T {
        let mut m = T::neg_infinity();
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.score(k, x);
            m = m.max(*o);
        }
        let mut z = T::zero();
        for o in out.iter_mut() {
            *o = (*o - m).exp();
            z += *o;
        }
        for o in out.iter_mut() {
            *o /= z;
        }
        m + z.ln()
    }
}

/// Covariates and frozen responsibilities for one gating M-step.
#[derive(Debug, Clone, Copy)]
pub struct GatingData<'a, T> {
    /// Row-major `N x dim` covariates.
    pub xs: &'a [T],
    pub dim: usize,
    /// Row-major `N x k` responsibilities; each row sums to one.
    pub resp: &'a [T],
    pub k: usize,
}

impl<'a, T: Scalar> GatingData<'a, T> {
    pub fn len(&self) -> usize {
        self.resp.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.resp.is_empty()
    }

    fn x(&self, n: usize) -> &'a [T] {
        &self.xs[n * self.dim..(n + 1) * self.dim]
    }

    fn r(&self, n: usize) -> &'a [T] {
        &self.resp[n * self.k..(n + 1) * self.k]
    }
}

/// `sum_n sum_k r_nk log softmax_k(...)`.
pub fn gating_objective<T: Scalar>(gates: &Gates<T>, data: &GatingData<'_, T>) -> T {
    let mut total = T::zero();
    let mut scores = vec![T::zero(); gates.k];
    for n in 0..data.len() {
        let x = data.x(n);
        let mut m = T::neg_infinity();
        for (k, s) in scores.iter_mut().enumerate() {
            *s = gates.score(k, x);
            m = m.max(*s);
        }
        let lse = m + scores.iter().map(|&s| (s - m).exp()).sum::<T>().ln();
        for (r, s) in data.r(n).iter().zip(&scores) {
            if *r > T::zero() {
                total += *r * (*s - lse);
            }
        }
    }
    total
}

/// Outcome of one damped Newton update.
#[derive(Debug, Clone)]
pub struct NewtonStep<T> {
    pub gates: Gates<T>,
    /// Euclidean norm of the accepted step (zero if no step was accepted).
    pub step_norm: T,
    pub objective: T,
    pub accepted: bool,
}

const MAX_HALVINGS: usize = 20;

/// One damped Newton step on the gating objective. The returned gates are
/// baseline-normalised and never have a lower objective than the input.
pub fn gating_newton_step<T: Scalar>(
    gates: &Gates<T>,
    data: &GatingData<'_, T>,
    ridge: T,
) -> Result<NewtonStep<T>> {
    if data.k != gates.k || data.dim != gates.dim {
        return Err(Error::input("gates and gating data disagree on shape"));
    }
    let mut base = gates.clone();
    base.normalize_baseline();
    let current = gating_objective(&base, data);
    if gates.k == 1 {
        return Ok(NewtonStep {
            gates: base,
            step_norm: T::zero(),
            objective: current,
            accepted: false,
        });
    }

    let p = gates.dim + 1;
    let free = gates.k - 1;
    let m = free * p;
    let mut grad = vec![T::zero(); m];
    let mut hess = vec![T::zero(); m * m];
    let mut probs = vec![T::zero(); gates.k];
    let mut xt = vec![T::one(); p];

    for n in 0..data.len() {
        let x = data.x(n);
        xt[1..].copy_from_slice(x);
        base.probs_into(x, &mut probs);
        let r = data.r(n);
        for g in 0..free {
            let resid = r[g] - probs[g];
            for i in 0..p {
                grad[g * p + i] += resid * xt[i];
            }
            for h in g..free {
                let w = if g == h {
                    probs[g] * (T::one() - probs[g])
                } else {
                    -probs[g] * probs[h]
                };
                if w == T::zero() {
                    continue;
                }
                for i in 0..p {
                    let wi = w * xt[i];
                    let row = (g * p + i) * m + h * p;
                    for j in 0..p {
                        hess[row + j] += wi * xt[j];
                    }
                }
            }
        }
    }
    // fill the lower block triangle and add the ridge
    for g in 0..free {
        for h in 0..g {
            for i in 0..p {
                for j in 0..p {
                    hess[(g * p + i) * m + h * p + j] = hess[(h * p + j) * m + g * p + i];
                }
            }
        }
    }
    for i in 0..m {
        hess[i * m + i] += ridge;
    }
    let mut dir = grad.clone();
    if !cholesky_solve(&mut hess, m, &mut dir) {
        return Err(Error::SingularHessian);
    }
    let dir_norm = dir.iter().map(|&d| d * d).sum::<T>().sqrt();

    let mut scale = T::one();
    for _ in 0..=MAX_HALVINGS {
        let mut trial = base.clone();
        for g in 0..free {
            trial.omega0[g] += scale * dir[g * p];
            for d in 0..gates.dim {
                trial.omega1[g * gates.dim + d] += scale * dir[g * p + 1 + d];
            }
        }
        let value = gating_objective(&trial, data);
        if value.is_finite() && value >= current {
            return Ok(NewtonStep {
                gates: trial,
                step_norm: scale * dir_norm,
                objective: value,
                accepted: true,
            });
        }
        scale *= T::c(0.5);
    }
    Ok(NewtonStep {
        gates: base,
        step_norm: T::zero(),
        objective: current,
        accepted: false,
    })
}

/// Runs damped Newton steps until the step norm drops below `tol` or `max_iter`
/// steps have been taken.
pub fn fit_gates<T: Scalar>(
    gates: &Gates<T>,
    data: &GatingData<'_, T>,
    ridge: T,
    max_iter: usize,
    tol: T,
) -> Result<Gates<T>> {
    let mut g = gates.clone();
    g.normalize_baseline();
    for _ in 0..max_iter {
        let step = gating_newton_step(&g, data, ridge)?;
        g = step.gates;
        if !step.accepted || step.step_norm < tol {
            break;
        }
    }
    Ok(g)
}
