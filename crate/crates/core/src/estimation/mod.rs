//! Maximum-likelihood fitting by EM.

mod em;
mod gating;
mod init;

pub use em::{em_fit, expert_m_step, fit_with_config};
pub use gating::{fit_gates, gating_newton_step, gating_objective, Gates, GatingData, NewtonStep};
pub use init::{init_kmeans, init_perturbed, init_random, kmeans, KMeans};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MixingMeasure;

/// How EM is started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    Kmeans,
    PerturbedTruth,
    Random,
}

impl std::str::FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(InitScheme::Kmeans),
            "perturbed" | "perturbed_truth" => Ok(InitScheme::PerturbedTruth),
            "random" => Ok(InitScheme::Random),
            other => Err(Error::input(format!("unknown init scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Number of experts.
    pub k: usize,
    /// Stop when the average log-likelihood changes by less than this.
    pub tol: f64,
    pub max_iter: usize,
    pub init: InitScheme,
    pub newton_max_iter: usize,
    pub newton_tol: f64,
    /// Diagonal regulariser added to the negative gating Hessian.
    pub ridge: f64,
    /// Lower bound on every expert variance.
    pub sigma_floor: f64,
    /// Standard deviation of the favourable-initialisation noise.
    pub perturb_scale: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            k: 2,
            tol: 1e-6,
            max_iter: 2000,
            init: InitScheme::Kmeans,
            newton_max_iter: 25,
            newton_tol: 1e-8,
            ridge: 1e-8,
            sigma_floor: 1e-8,
            perturb_scale: 0.5,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::input("k must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::input("tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::input("max_iter must be at least 1"));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::input("sigma_floor must be positive"));
        }
        if !(self.ridge >= 0.0) || !(self.newton_tol >= 0.0) || !(self.perturb_scale >= 0.0) {
            return Err(Error::input("ridge, newton_tol and perturb_scale must be nonnegative"));
        }
        Ok(())
    }
}

/// Output of [`em_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: crate::Scalar + Deserialize<'de>"))]
pub struct FitResult<T> {
    /// Baseline-normalised fitted model.
    pub model: MixingMeasure<T>,
    /// Average log-likelihood at the start of every iteration, plus the final value.
    pub loglik_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}
