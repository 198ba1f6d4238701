use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, Keyed};
use super::{check_failures, mean_std, slope_fit, thread_pool, NGrid, RunOptions, TruthRef};
use crate::datagen::{sample, GenConfig};
use crate::dendrogram::build_path;
use crate::error::{Error, Result};
use crate::estimation::{fit_with_config, FitConfig, InitScheme};
use crate::io::config_digest;
use crate::metrics::{loss, LossKind};
use crate::model::MixingMeasure;
use crate::seeding::derive_seed;

const DATA_STREAM: u64 = 0;
const FIT_STREAM: u64 = 1;

/// Which estimator a rate study tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateSetting {
    /// Fit exactly `K0` experts.
    Exact,
    /// Fit `k > K0` experts.
    Overfit { k: usize },
    /// Fit `k` experts, then merge down the dendrogram to `K0` atoms.
    Merged { k: usize },
}

impl RateSetting {
    fn experts(self, k0: usize) -> usize {
        match self {
            RateSetting::Exact => k0,
            RateSetting::Overfit { k } | RateSetting::Merged { k } => k,
        }
    }
}

/// Estimator a loss is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// The EM output.
    Fitted,
    /// Level `K0` of the EM output's dendrogram.
    Merged,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Fitted => "fitted",
            Stage::Merged => "merged",
        }
    }
}

fn curve_name(stage: Stage, kind: LossKind) -> String {
    format!("{}_{}", stage.name(), kind.name())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateStudyConfig {
    pub truth: TruthRef,
    pub setting: RateSetting,
    pub grid: NGrid,
    pub reps: usize,
    /// Losses evaluated on every estimator; the first one is the headline curve.
    pub losses: Vec<LossKind>,
    /// EM settings; `k` is overridden by the setting.
    pub em: FitConfig,
    pub x_lo: f64,
    pub x_hi: f64,
    pub seed: u64,
}

impl Default for RateStudyConfig {
    fn default() -> Self {
        RateStudyConfig {
            truth: TruthRef::default(),
            setting: RateSetting::Exact,
            grid: NGrid {
                n_min: 100,
                n_max: 10_000,
                count: 12,
            },
            reps: 10,
            losses: vec![LossKind::Vde],
            em: FitConfig {
                init: InitScheme::PerturbedTruth,
                ..FitConfig::default()
            },
            x_lo: -1.0,
            x_hi: 1.0,
            seed: 0,
        }
    }
}

impl RateStudyConfig {
    pub fn validate(&self) -> Result<MixingMeasure<f64>> {
        let truth = self.truth.resolve()?;
        let k0 = truth.len();
        let k = self.setting.experts(k0);
        match self.setting {
            RateSetting::Exact => {}
            RateSetting::Overfit { k } | RateSetting::Merged { k } if k < k0 => {
                return Err(Error::input(format!("setting needs k >= {k0}, got {k}")));
            }
            _ => {}
        }
        self.grid.sizes()?;
        if self.grid.n_min < 10 * k {
            return Err(Error::input(format!("n_min must be at least 10 * k = {}", 10 * k)));
        }
        if self.reps == 0 {
            return Err(Error::input("reps must be at least 1"));
        }
        if self.losses.is_empty() {
            return Err(Error::input("at least one loss is required"));
        }
        self.em.validate()?;
        GenConfig {
            n: self.grid.n_min,
            x_lo: self.x_lo,
            x_hi: self.x_hi,
            ..GenConfig::default()
        }
        .validate()?;
        Ok(truth)
    }

    fn stages(&self) -> Vec<Stage> {
        match self.setting {
            RateSetting::Merged { .. } => vec![Stage::Fitted, Stage::Merged],
            _ => vec![Stage::Fitted],
        }
    }

    fn headline(&self) -> String {
        let stage = match self.setting {
            RateSetting::Merged { .. } => Stage::Merged,
            _ => Stage::Fitted,
        };
        curve_name(stage, self.losses[0])
    }
}

/// One replication of a rate study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRecord {
    pub n_index: usize,
    pub n: usize,
    pub rep: usize,
    /// Curve name (`fitted_vde`, `merged_vdfra`, ...) to loss value.
    pub losses: BTreeMap<String, f64>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl Keyed for RateRecord {
    fn key(&self) -> (usize, usize) {
        (self.n_index, self.rep)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub reps_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub name: String,
    pub stage: Stage,
    pub loss: LossKind,
    pub rows: Vec<RateRow>,
    /// Log-log least-squares slope of mean loss on `N`; absent with fewer than three
    /// usable sizes.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudyResult {
    /// Rows of the headline curve.
    pub rows: Vec<RateRow>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub curves: Vec<RateCurve>,
    /// Every replication, ordered by `(n_index, rep)`.
    pub records: Vec<RateRecord>,
    pub skipped: usize,
    pub total: usize,
}

impl RateStudyResult {
    pub fn curve(&self, name: &str) -> Option<&RateCurve> {
        self.curves.iter().find(|c| c.name == name)
    }
}

fn replicate(cfg: &RateStudyConfig, truth: &MixingMeasure<f64>, n_index: usize, n: usize, rep: usize) -> RateRecord {
    let mut record = RateRecord {
        n_index,
        n,
        rep,
        losses: BTreeMap::new(),
        iterations: 0,
        converged: false,
        error: None,
    };
    if let Err(e) = replicate_into(cfg, truth, &mut record) {
        record.losses.clear();
        record.error = Some(e.to_string());
    }
    record
}

fn replicate_into(cfg: &RateStudyConfig, truth: &MixingMeasure<f64>, record: &mut RateRecord) -> Result<()> {
    let key = [record.n_index as u64, record.rep as u64];
    let data = sample(
        truth,
        &GenConfig {
            n: record.n,
            x_lo: cfg.x_lo,
            x_hi: cfg.x_hi,
            contamination_eps: 0.0,
            seed: derive_seed(cfg.seed, &[DATA_STREAM, key[0], key[1]]),
        },
    )?;
    let k0 = truth.len();
    let em = FitConfig {
        k: cfg.setting.experts(k0),
        seed: derive_seed(cfg.seed, &[FIT_STREAM, key[0], key[1]]),
        ..cfg.em.clone()
    };
    let fit = fit_with_config(&data, &em, Some(truth))?;
    record.iterations = fit.iterations;
    record.converged = fit.converged;
    for stage in cfg.stages() {
        let model = match stage {
            Stage::Fitted => fit.model.clone(),
            Stage::Merged => build_path(&fit.model).level(k0).expect("path reaches K0").clone(),
        };
        for &kind in &cfg.losses {
            record.losses.insert(curve_name(stage, kind), loss(kind, &model, truth)?.value);
        }
    }
    Ok(())
}

/// Runs a rate study: for every grid size and replication, simulate, fit, optionally
/// merge, and evaluate each loss against the truth; then average per size and fit
/// log-log slopes.
pub fn run_rate_study(cfg: &RateStudyConfig, opts: &RunOptions) -> Result<RateStudyResult> {
    let truth = cfg.validate()?;
    let sizes = cfg.grid.sizes()?;
    let checkpoint = match &opts.checkpoint {
        Some(path) => Checkpoint::open(path, "rate", &config_digest(cfg)?)?,
        None => Checkpoint::disabled(),
    };
    let pending: Vec<(usize, usize, usize)> = sizes
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| (0..cfg.reps).map(move |r| (i, n, r)))
        .filter(|&(i, _, r)| !checkpoint.done().contains_key(&(i, r)))
        .collect();
    let fresh: Vec<RateRecord> = thread_pool(opts)?.install(|| {
        pending
            .par_iter()
            .map(|&(i, n, r)| {
                let rec = replicate(cfg, &truth, i, n, r);
                checkpoint.record(&rec).map(|_| rec)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut all = checkpoint.into_done();
    for rec in fresh {
        all.insert(rec.key(), rec);
    }
    let records: Vec<RateRecord> = all
        .into_values()
        .filter(|r| r.n_index < sizes.len() && r.rep < cfg.reps)
        .collect();
    let total = records.len();
    let skipped = records.iter().filter(|r| r.error.is_some()).count();
    check_failures(skipped, total)?;

    let mut curves = Vec::new();
    for stage in cfg.stages() {
        for &kind in &cfg.losses {
            let name = curve_name(stage, kind);
            let rows: Vec<RateRow> = sizes
                .iter()
                .enumerate()
                .filter_map(|(i, &n)| {
                    let vals: Vec<f64> = records
                        .iter()
                        .filter(|r| r.n_index == i)
                        .filter_map(|r| r.losses.get(&name).copied())
                        .collect();
                    (!vals.is_empty()).then(|| {
                        let (mean, std) = mean_std(&vals);
                        RateRow {
                            n,
                            mean,
                            std,
                            reps_used: vals.len(),
                        }
                    })
                })
                .collect();
            let points: Vec<(f64, f64)> =
                rows.iter().filter(|r| r.mean > 0.0).map(|r| (r.n as f64, r.mean)).collect();
            let fit = slope_fit(&points).ok();
            curves.push(RateCurve {
                name,
                stage,
                loss: kind,
                rows,
                slope: fit.map(|f| f.0),
                intercept: fit.map(|f| f.1),
            });
        }
    }
    let head = curves
        .iter()
        .find(|c| c.name == cfg.headline())
        .expect("headline curve exists")
        .clone();
    Ok(RateStudyResult {
        rows: head.rows,
        slope: head.slope,
        intercept: head.intercept,
        curves,
        records,
        skipped,
        total,
    })
}
