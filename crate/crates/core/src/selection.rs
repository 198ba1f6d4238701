//! Order selection: the dendrogram selection criterion on a single over-fitted
//! model, and the AIC / BIC / ICL baselines that refit every candidate order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dendrogram::Dendrogram;
use crate::error::{Error, Result};
use crate::estimation::{fit_with_config, FitConfig, FitResult};
use crate::model::{Dataset, MixingMeasure};
use crate::scalar::Scalar;
use crate::seeding::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Dsc,
    Aic,
    Bic,
    Icl,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dsc, Method::Aic, Method::Bic, Method::Icl];
    pub const BASELINES: [Method; 3] = [Method::Aic, Method::Bic, Method::Icl];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dsc => "DSC",
            Method::Aic => "AIC",
            Method::Bic => "BIC",
            Method::Icl => "ICL",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dsc" => Ok(Method::Dsc),
            "aic" => Ok(Method::Aic),
            "bic" => Ok(Method::Bic),
            "icl" => Ok(Method::Icl),
            other => Err(Error::input(format!("unknown selection method {other:?}"))),
        }
    }
}

/// How the DSC likelihood weight `epsilon_N` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonRule {
    /// `log N`.
    #[default]
    LogN,
    Fixed(f64),
}

impl EpsilonRule {
    pub fn resolve(self, n: usize) -> Result<f64> {
        let eps = match self {
            EpsilonRule::LogN => (n as f64).ln(),
            EpsilonRule::Fixed(v) => v,
        };
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::input(format!("epsilon_n must be positive and finite, got {eps}")));
        }
        Ok(eps)
    }
}

impl std::str::FromStr for EpsilonRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("logn") {
            return Ok(EpsilonRule::LogN);
        }
        s.parse::<f64>()
            .map(EpsilonRule::Fixed)
            .map_err(|_| Error::input(format!("epsilon must be `logn` or a number, got {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub method: Method,
    /// Score per candidate order; smaller is better.
    pub per_level: BTreeMap<usize, f64>,
    pub chosen: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epsilon_n: Option<f64>,
}

/// Smallest key attaining the minimum score.
fn argmin(scores: &BTreeMap<usize, f64>) -> usize {
    let mut best = None;
    for (&k, &v) in scores {
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((k, v)),
        }
    }
    best.expect("at least one candidate").0
}

/// `DSC^(kappa) = -(h^(kappa) + epsilon_n * avg_loglik(G^(kappa)))` for `kappa` in
/// `[2, K]`; the smallest minimiser is chosen.
pub fn dsc_select<T: Scalar>(dg: &Dendrogram<T>, data: &Dataset<T>, epsilon_n: f64) -> Result<SelectionReport> {
    if !(epsilon_n > 0.0 && epsilon_n.is_finite()) {
        return Err(Error::input("epsilon_n must be positive and finite"));
    }
    let top = dg.top();
    if top < 2 {
        return Err(Error::input("DSC needs a dendrogram with at least two atoms"));
    }
    let mut per_level = BTreeMap::new();
    for kappa in 2..=top {
        let h = dg.height(kappa).expect("level in range").as_f64();
        let ll = dg.level(kappa).expect("level in range").avg_log_likelihood(data)?.as_f64();
        per_level.insert(kappa, -(h + epsilon_n * ll));
    }
    Ok(SelectionReport {
        method: Method::Dsc,
        chosen: argmin(&per_level),
        per_level,
        epsilon_n: Some(epsilon_n),
    })
}

/// Free parameters of a `k`-expert model on `d` covariates with the last gate fixed:
/// `(k - 1)(d + 1)` gating, `k(d + 1)` regression and `k` variances.
pub fn param_count(k: usize, d: usize) -> usize {
    (k - 1) * (d + 1) + k * (d + 1) + k
}

/// A fitted model with the statistics the information criteria need.
#[derive(Debug, Clone)]
pub struct SweepFit<T> {
    pub k: usize,
    pub model: MixingMeasure<T>,
    /// Average log-likelihood on the fitting data.
    pub avg_loglik: f64,
    /// `sum_n entropy(responsibilities(x_n, y_n))`.
    pub entropy: f64,
}

impl<T: Scalar> SweepFit<T> {
    pub fn new(k: usize, model: MixingMeasure<T>, data: &Dataset<T>) -> Result<Self> {
        let avg_loglik = model.avg_log_likelihood(data)?.as_f64();
        let mut entropy = 0.0;
        for (x, y) in data.iter() {
            for r in model.responsibilities(x, y)? {
                let r = r.as_f64();
                if r > 0.0 {
                    entropy -= r * r.ln();
                }
            }
        }
        Ok(SweepFit {
            k,
            model,
            avg_loglik,
            entropy,
        })
    }

    pub fn score(&self, method: Method, n: usize) -> Result<f64> {
        let p = param_count(self.k, self.model.dim()) as f64;
        let nf = n as f64;
        let deviance = -2.0 * nf * self.avg_loglik;
        match method {
            Method::Aic => Ok(2.0 * p + deviance),
            Method::Bic => Ok(p * nf.ln() + deviance),
            Method::Icl => Ok(p * nf.ln() + deviance + 2.0 * self.entropy),
            Method::Dsc => Err(Error::input("DSC is not a sweep criterion")),
        }
    }
}

/// Fits `k = 1..=kmax` with `fit(k)` and wraps every result as a [`SweepFit`].
pub fn sweep_fits<T: Scalar, F>(data: &Dataset<T>, kmax: usize, mut fit: F) -> Result<Vec<SweepFit<T>>>
where
    F: FnMut(usize) -> Result<FitResult<T>>,
{
    if kmax == 0 {
        return Err(Error::input("kmax must be at least 1"));
    }
    (1..=kmax)
        .map(|k| {
            let res = fit(k).map_err(|e| Error::FitFailed { k, source: Box::new(e) })?;
            SweepFit::new(k, res.model, data)
        })
        .collect()
}

/// Scores already fitted sweep models under a baseline criterion.
pub fn report_from_fits<T: Scalar>(fits: &[SweepFit<T>], n: usize, method: Method) -> Result<SelectionReport> {
    if fits.is_empty() {
        return Err(Error::input("no fitted models to score"));
    }
    let mut per_level = BTreeMap::new();
    for f in fits {
        per_level.insert(f.k, f.score(method, n)?);
    }
    Ok(SelectionReport {
        method,
        chosen: argmin(&per_level),
        per_level,
        epsilon_n: None,
    })
}

/// Fits every order `1..=kmax` by EM (seed for order `k` derived from `cfg.seed` and
/// `k`) and chooses by `method`.
pub fn criterion_sweep<T: Scalar>(
    data: &Dataset<T>,
    kmax: usize,
    cfg: &FitConfig,
    method: Method,
) -> Result<SelectionReport> {
    let fits = sweep_fits(data, kmax, |k| {
        let c = FitConfig {
            k,
            seed: derive_seed(cfg.seed, &[k as u64]),
            ..cfg.clone()
        };
        fit_with_config(data, &c, None)
    })?;
    report_from_fits(&fits, data.len(), method)
}
