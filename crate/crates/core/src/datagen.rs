//! Synthetic data from a known model, with optional Laplace contamination.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, ExpertAtom, MixingMeasure};
use crate::scalar::Scalar;
use crate::seeding::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n: usize,
    /// Covariates are i.i.d. `Uniform(x_lo, x_hi)` per coordinate; `x_lo == x_hi` pins them.
    pub x_lo: f64,
    pub x_hi: f64,
    /// Probability that a response is replaced by a `Laplace(0, 1)` draw independent of `x`.
    pub contamination_eps: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n: 1000,
            x_lo: -1.0,
            x_hi: 1.0,
            contamination_eps: 0.0,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::input("n must be at least 1"));
        }
        if !(self.contamination_eps >= 0.0 && self.contamination_eps < 1.0) {
            return Err(Error::input("contamination_eps must lie in [0, 1)"));
        }
        if !(self.x_lo.is_finite() && self.x_hi.is_finite() && self.x_lo <= self.x_hi) {
            return Err(Error::input("covariate bounds must be finite with x_lo <= x_hi"));
        }
        Ok(())
    }
}

/// Standard Laplace draw by inverting the CDF.
fn laplace<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Draws `cfg.n` pairs from `truth`, contaminated with probability `cfg.contamination_eps`.
pub fn sample<T: Scalar>(truth: &MixingMeasure<T>, cfg: &GenConfig) -> Result<Dataset<T>> {
    sample_labelled(truth, cfg).map(|(d, _)| d)
}

/// Like [`sample`], also returning which rows were contaminated.
pub fn sample_labelled<T: Scalar>(truth: &MixingMeasure<T>, cfg: &GenConfig) -> Result<(Dataset<T>, Vec<bool>)> {
    cfg.validate()?;
    let dim = truth.dim();
    let mut rng = rng_from_seed(cfg.seed);
    let mut xs = Vec::with_capacity(cfg.n * dim);
    let mut ys = Vec::with_capacity(cfg.n);
    let mut flags = Vec::with_capacity(cfg.n);
    let mut x = vec![T::zero(); dim];
    for _ in 0..cfg.n {
        for xi in x.iter_mut() {
            let u: f64 = rng.random();
            *xi = T::c(cfg.x_lo + (cfg.x_hi - cfg.x_lo) * u);
        }
        let contaminated = cfg.contamination_eps > 0.0 && rng.random::<f64>() < cfg.contamination_eps;
        let y = if contaminated {
            T::c(laplace(&mut rng))
        } else {
            let gates = truth.gating_probs(&x)?;
            let mut u = T::c(rng.random::<f64>());
            let mut pick = gates.len() - 1;
            for (k, &p) in gates.iter().enumerate() {
                if u < p {
                    pick = k;
                    break;
                }
                u -= p;
            }
            let atom = &truth.atoms()[pick];
            let z: f64 = StandardNormal.sample(&mut rng);
            atom.mean(&x) + atom.sigma.sqrt() * T::c(z)
        };
        xs.extend_from_slice(&x);
        ys.push(y);
        flags.push(contaminated);
    }
    Ok((Dataset::from_flat(dim, xs, ys)?, flags))
}

fn atom1<T: Scalar>(omega0: f64, omega1: f64, a: f64, b: f64, sigma: f64) -> ExpertAtom<T> {
    ExpertAtom::new(T::c(omega0), vec![T::c(omega1)], vec![T::c(a)], T::c(b), T::c(sigma))
        .expect("registry atoms are valid")
}

/// The two named ground-truth models used by the experiments, both with `D = 1`.
///
/// * `g0_2`: `e^-8 at (25, -20, 15, 0.3)` and `e^0 at (0, 20, -5, 0.4)`
/// * `g0_3`: `e^-2 at (3, 1, 0, 1)`, `e^1 at (-3.5, 8, 7, 0.8)` and `e^0 at (0, 3, 5, 0.6)`
///
/// Tuples are `(omega1, a, b, sigma)`.
pub fn paper_truths<T: Scalar>() -> BTreeMap<&'static str, MixingMeasure<T>> {
    let mut m = BTreeMap::new();
    m.insert(
        "g0_2",
        MixingMeasure::new(1, vec![atom1(-8.0, 25.0, -20.0, 15.0, 0.3), atom1(0.0, 0.0, 20.0, -5.0, 0.4)])
            .expect("valid"),
    );
    m.insert(
        "g0_3",
        MixingMeasure::new(
            1,
            vec![
                atom1(-2.0, 3.0, 1.0, 0.0, 1.0),
                atom1(1.0, -3.5, 8.0, 7.0, 0.8),
                atom1(0.0, 0.0, 3.0, 5.0, 0.6),
            ],
        )
        .expect("valid"),
    );
    m
}

pub fn truth_by_name<T: Scalar>(name: &str) -> Result<MixingMeasure<T>> {
    paper_truths::<T>()
        .remove(name)
        .ok_or_else(|| Error::input(format!("unknown truth {name:?}; expected g0_2 or g0_3")))
}
