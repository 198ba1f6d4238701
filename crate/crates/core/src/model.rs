//! The softmax-gated Gaussian mixture-of-experts model.
//!
//! A model is a finite *mixing measure*: a list of weighted atoms
//! `exp(omega0_k) * delta(omega1_k, a_k, b_k, sigma_k)`. For covariate `x` the
//! conditional law of the scalar response is
//!
//! ```text
//! p(y | x) = sum_k softmax_k(omega1_k . x + omega0_k) * N(y | a_k . x + b_k, sigma_k)
//! ```
//!
//! **`sigma` is a variance**, not a standard deviation. The merge operator and
//! every density routine in this crate rely on that convention.
//!
//! Weights are stored unnormalised. The gate is invariant under adding a common
//! `(t0, t1)` to every `(omega0, omega1)`; [`MixingMeasure::normalize_baseline`]
//! removes that freedom explicitly and is never applied implicitly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, log_sum_exp, softmax_in_place, Scalar};

/// Densities below this value are floored before taking logs.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// One weighted expert: gate intercept/slope and Gaussian expert parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertAtom<T> {
    /// Gate intercept; the atom's (unnormalised) weight is `exp(omega0)`.
    pub omega0: T,
    /// Gate slope, length `D`.
    pub omega1: Vec<T>,
    /// Expert regression slope, length `D`.
    pub a: Vec<T>,
    /// Expert intercept.
    pub b: T,
    /// Expert variance (units of y squared). Must be positive.
    pub sigma: T,
}

impl<T: Scalar> ExpertAtom<T> {
    pub fn new(omega0: T, omega1: Vec<T>, a: Vec<T>, b: T, sigma: T) -> Result<Self> {
        let atom = ExpertAtom {
            omega0,
            omega1,
            a,
            b,
            sigma,
        };
        atom.validate(atom.omega1.len())?;
        Ok(atom)
    }

    /// Checks finiteness, positivity of the variance and vector lengths.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.omega1.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.omega1.len(),
            });
        }
        if self.a.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.a.len(),
            });
        }
        let all_finite = self.omega0.is_finite()
            && self.b.is_finite()
            && self.sigma.is_finite()
            && self.omega1.iter().chain(&self.a).all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::input("atom has non-finite parameters"));
        }
        if self.sigma <= T::zero() {
            return Err(Error::input(format!(
                "expert variance must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.omega1.len()
    }

    pub fn weight(&self) -> T {
        self.omega0.exp()
    }

    /// Expert mean `a . x + b`.
    #[inline]
    pub fn mean(&self, x: &[T]) -> T {
        dot(&self.a, x) + self.b
    }

    /// Gate score `omega1 . x + omega0`.
    #[inline]
    pub fn gate_score(&self, x: &[T]) -> T {
        dot(&self.omega1, x) + self.omega0
    }

    /// Log of the Gaussian expert density at `y`.
    #[inline]
    pub fn log_expert_density(&self, x: &[T], y: T) -> T {
        let r = y - self.mean(x);
        let two_pi = T::c(std::f64::consts::TAU);
        -T::c(0.5) * (two_pi * self.sigma).ln() - r * r / (T::c(2.0) * self.sigma)
    }

    /// The parameter point `theta = (omega1, a, b, sigma)` used for Voronoi assignment.
    pub fn theta(&self) -> Vec<T> {
        let mut t = Vec::with_capacity(2 * self.dim() + 2);
        t.extend_from_slice(&self.omega1);
        t.extend_from_slice(&self.a);
        t.push(self.b);
        t.push(self.sigma);
        t
    }
}

#[derive(Deserialize)]
struct RawMeasure<T> {
    dim: usize,
    atoms: Vec<ExpertAtom<T>>,
}

/// A finite mixing measure over expert atoms; the model object `G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure<T>", bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct MixingMeasure<T> {
    dim: usize,
    atoms: Vec<ExpertAtom<T>>,
}

impl<T: Scalar> TryFrom<RawMeasure<T>> for MixingMeasure<T> {
    type Error = Error;

    fn try_from(raw: RawMeasure<T>) -> Result<Self> {
        MixingMeasure::new(raw.dim, raw.atoms)
    }
}

impl<T: Scalar> MixingMeasure<T> {
    pub fn new(dim: usize, atoms: Vec<ExpertAtom<T>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("covariate dimension must be positive"));
        }
        if atoms.is_empty() {
            return Err(Error::input("mixing measure needs at least one atom"));
        }
        for atom in &atoms {
            atom.validate(dim)?;
        }
        Ok(MixingMeasure { dim, atoms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[ExpertAtom<T>] {
        &self.atoms
    }

    pub fn into_atoms(self) -> Vec<ExpertAtom<T>> {
        self.atoms
    }

    /// Unnormalised weights `exp(omega0_k)`.
    pub fn weights(&self) -> Vec<T> {
        self.atoms.iter().map(ExpertAtom::weight).collect()
    }

    pub fn total_weight(&self) -> T {
        self.atoms.iter().map(ExpertAtom::weight).sum()
    }

    fn check_x(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Softmax gate probabilities at `x`.
    pub fn gating_probs(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_x(x)?;
        let mut p: Vec<T> = self.atoms.iter().map(|a| a.gate_score(x)).collect();
        softmax_in_place(&mut p);
        Ok(p)
    }

    /// Writes `log(gate_k) + log N(y | expert_k)` into `out` and returns their log-sum-exp,
    /// i.e. `log p(y | x)` before flooring. No dimension check.
    pub(crate) fn joint_log_terms(&self, x: &[T], y: T, out: &mut [T]) -> T {
        let mut max_gate = T::neg_infinity();
        for (o, atom) in out.iter_mut().zip(&self.atoms) {
            *o = atom.gate_score(x);
            max_gate = max_gate.max(*o);
        }
        let mut z = T::zero();
        for o in out.iter() {
            z += (*o - max_gate).exp();
        }
        let log_norm = max_gate + z.ln();
        for (o, atom) in out.iter_mut().zip(&self.atoms) {
            *o = *o - log_norm + atom.log_expert_density(x, y);
        }
        log_sum_exp(out)
    }

    /// `p(y | x)`, the gated Gaussian mixture density.
    pub fn conditional_density(&self, x: &[T], y: T) -> Result<T> {
        self.check_x(x)?;
        let mut buf = vec![T::zero(); self.len()];
        Ok(self.joint_log_terms(x, y, &mut buf).exp())
    }

    /// Posterior expert probabilities given `(x, y)`.
    pub fn responsibilities(&self, x: &[T], y: T) -> Result<Vec<T>> {
        self.check_x(x)?;
        let mut r = vec![T::zero(); self.len()];
        self.joint_log_terms(x, y, &mut r);
        softmax_in_place(&mut r);
        Ok(r)
    }

    /// Average log-likelihood over `data`.
    pub fn avg_log_likelihood(&self, data: &Dataset<T>) -> Result<T> {
        Ok(self.log_likelihood_summary(data)?.average)
    }

    /// Average log-likelihood together with the number of floored density values.
    pub fn log_likelihood_summary(&self, data: &Dataset<T>) -> Result<LogLikelihood<T>> {
        if data.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: data.dim(),
            });
        }
        let floor = T::c(DENSITY_FLOOR.ln());
        let mut buf = vec![T::zero(); self.len()];
        let mut total = T::zero();
        let mut floored = 0;
        for (n, (x, y)) in data.iter().enumerate() {
            let mut lp = self.joint_log_terms(x, y, &mut buf);
            if lp.is_nan() || lp == T::infinity() {
                return Err(Error::NonFiniteLogLikelihood { index: n });
            }
            if lp < floor {
                lp = floor;
                floored += 1;
            }
            total += lp;
        }
        let average = total / T::from_usize(data.len()).unwrap();
        Ok(LogLikelihood { average, floored })
    }

    /// Shifts every gate by `(t0, t1)`; densities are unchanged.
    pub fn translate(&self, t0: T, t1: &[T]) -> Result<Self> {
        self.check_x(t1)?;
        let atoms = self
            .atoms
            .iter()
            .map(|a| ExpertAtom {
                omega0: a.omega0 + t0,
                omega1: a.omega1.iter().zip(t1).map(|(&w, &t)| w + t).collect(),
                ..a.clone()
            })
            .collect();
        MixingMeasure::new(self.dim, atoms)
    }

    /// Subtracts the last atom's gate from every gate, so the last atom has
    /// `omega0 = 0` and `omega1 = 0`.
    pub fn normalize_baseline(&self) -> Self {
        let last = self.atoms.last().expect("non-empty measure");
        let t0 = last.omega0;
        let t1 = last.omega1.clone();
        let atoms = self
            .atoms
            .iter()
            .map(|a| ExpertAtom {
                omega0: a.omega0 - t0,
                omega1: a.omega1.iter().zip(&t1).map(|(&w, &t)| w - t).collect(),
                ..a.clone()
            })
            .collect();
        MixingMeasure {
            dim: self.dim,
            atoms,
        }
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> MixingMeasure<U> {
        let cv = |v: &[T]| v.iter().map(|x| U::c(x.as_f64())).collect::<Vec<U>>();
        MixingMeasure {
            dim: self.dim,
            atoms: self
                .atoms
                .iter()
                .map(|a| ExpertAtom {
                    omega0: U::c(a.omega0.as_f64()),
                    omega1: cv(&a.omega1),
                    a: cv(&a.a),
                    b: U::c(a.b.as_f64()),
                    sigma: U::c(a.sigma.as_f64()),
                })
                .collect(),
        }
    }
}

/// Result of [`MixingMeasure::log_likelihood_summary`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood<T> {
    pub average: T,
    /// Number of points whose density fell below [`DENSITY_FLOOR`].
    pub floored: usize,
}

/// Paired covariates and responses, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    dim: usize,
    xs: Vec<T>,
    ys: Vec<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(xs: Vec<Vec<T>>, ys: Vec<T>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::input(format!(
                "{} covariate rows but {} responses",
                xs.len(),
                ys.len()
            )));
        }
        let dim = xs.first().map(Vec::len).unwrap_or(0);
        let mut flat = Vec::with_capacity(dim * xs.len());
        for row in &xs {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Dataset::from_flat(dim, flat, ys)
    }

    /// Builds from a row-major covariate buffer of length `dim * ys.len()`.
    pub fn from_flat(dim: usize, xs: Vec<T>, ys: Vec<T>) -> Result<Self> {
        if ys.is_empty() {
            return Err(Error::input("dataset is empty"));
        }
        if dim == 0 {
            return Err(Error::input("covariate dimension must be positive"));
        }
        if xs.len() != dim * ys.len() {
            return Err(Error::input("covariate buffer length does not match dim * N"));
        }
        if let Some(i) = xs.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite covariate in row {}", i / dim)));
        }
        if let Some(i) = ys.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite response in row {i}")));
        }
        Ok(Dataset { dim, xs, ys })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    #[inline]
    pub fn x(&self, n: usize) -> &[T] {
        &self.xs[n * self.dim..(n + 1) * self.dim]
    }

    #[inline]
    pub fn y(&self, n: usize) -> T {
        self.ys[n]
    }

    pub fn ys(&self) -> &[T] {
        &self.ys
    }

    pub fn xs_flat(&self) -> &[T] {
        &self.xs
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], T)> + '_ {
        self.xs.chunks_exact(self.dim).zip(self.ys.iter().copied())
    }
}
