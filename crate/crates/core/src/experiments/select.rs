use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, Keyed};
use super::{check_failures, thread_pool, NGrid, RunOptions, TruthRef};
use crate::datagen::{sample, GenConfig};
use crate::dendrogram::build_path;
use crate::error::{Error, Result};
use crate::estimation::{fit_with_config, FitConfig, InitScheme};
use crate::io::config_digest;
use crate::model::MixingMeasure;
use crate::seeding::derive_seed;
use crate::selection::{dsc_select, report_from_fits, EpsilonRule, Method, SweepFit};

const DATA_STREAM: u64 = 0;
const FIT_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionStudyConfig {
    pub truth: TruthRef,
    pub grid: NGrid,
    pub reps: usize,
    /// Largest order: DSC fits this many experts once; baselines sweep `1..=kmax`.
    pub kmax: usize,
    pub methods: Vec<Method>,
    /// Probability of replacing a response by a `Laplace(0, 1)` draw.
    pub contamination_eps: f64,
    pub epsilon: EpsilonRule,
    /// EM settings. Orders `>= K0` start from the perturbed truth with
    /// `em.perturb_scale`; smaller orders start from k-means.
    pub em: FitConfig,
    pub x_lo: f64,
    pub x_hi: f64,
    pub seed: u64,
}

impl Default for SelectionStudyConfig {
    fn default() -> Self {
        SelectionStudyConfig {
            truth: TruthRef::default(),
            grid: NGrid {
                n_min: 1000,
                n_max: 20_000,
                count: 4,
            },
            reps: 15,
            kmax: 4,
            methods: Method::ALL.to_vec(),
            contamination_eps: 0.0,
            epsilon: EpsilonRule::LogN,
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

impl SelectionStudyConfig {
    pub fn validate(&self) -> Result<MixingMeasure<f64>> {
        let truth = self.truth.resolve()?;
        if self.kmax < truth.len().max(2) {
            return Err(Error::input(format!("kmax must be at least max(K0, 2) = {}", truth.len().max(2))));
        }
        self.grid.sizes()?;
        if self.grid.n_min < 10 * self.kmax {
            return Err(Error::input(format!("n_min must be at least 10 * kmax = {}", 10 * self.kmax)));
        }
        if self.reps == 0 || self.methods.is_empty() {
            return Err(Error::input("reps and methods must be nonempty"));
        }
        self.epsilon.resolve(self.grid.n_min)?;
        self.em.validate()?;
        GenConfig {
            n: self.grid.n_min,
            x_lo: self.x_lo,
            x_hi: self.x_hi,
            contamination_eps: self.contamination_eps,
            seed: 0,
        }
        .validate()?;
        Ok(truth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub n_index: usize,
    pub n: usize,
    pub rep: usize,
    pub chosen: BTreeMap<Method, usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl Keyed for SelectionRecord {
    fn key(&self) -> (usize, usize) {
        (self.n_index, self.rep)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub n: usize,
    pub method: Method,
    pub proportion_correct: f64,
    pub mean_chosen: f64,
    pub reps_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStudyResult {
    pub true_k: usize,
    pub rows: Vec<SelectionRow>,
    pub records: Vec<SelectionRecord>,
    pub skipped: usize,
    pub total: usize,
}

impl SelectionStudyResult {
    pub fn row(&self, n: usize, method: Method) -> Option<&SelectionRow> {
        self.rows.iter().find(|r| r.n == n && r.method == method)
    }
}

fn replicate(
    cfg: &SelectionStudyConfig,
    truth: &MixingMeasure<f64>,
    n_index: usize,
    n: usize,
    rep: usize,
) -> SelectionRecord {
    let mut record = SelectionRecord {
        n_index,
        n,
        rep,
        chosen: BTreeMap::new(),
        error: None,
    };
    match choose(cfg, truth, n_index, n, rep) {
        Ok(c) => record.chosen = c,
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

fn choose(
    cfg: &SelectionStudyConfig,
    truth: &MixingMeasure<f64>,
    n_index: usize,
    n: usize,
    rep: usize,
) -> Result<BTreeMap<Method, usize>> {
    let (ni, r) = (n_index as u64, rep as u64);
    let data = sample(
        truth,
        &GenConfig {
            n,
            x_lo: cfg.x_lo,
            x_hi: cfg.x_hi,
            contamination_eps: cfg.contamination_eps,
            seed: derive_seed(cfg.seed, &[DATA_STREAM, ni, r]),
        },
    )?;
    let k0 = truth.len();
    let needs_sweep = cfg.methods.iter().any(|&m| m != Method::Dsc);
    let orders: Vec<usize> = if needs_sweep { (1..=cfg.kmax).collect() } else { vec![cfg.kmax] };
    let mut fits = Vec::with_capacity(orders.len());
    for k in orders {
        let em = FitConfig {
            k,
            init: if k >= k0 { InitScheme::PerturbedTruth } else { InitScheme::Kmeans },
            seed: derive_seed(cfg.seed, &[FIT_STREAM, ni, r, k as u64]),
            ..cfg.em.clone()
        };
        let fit = fit_with_config(&data, &em, Some(truth)).map_err(|e| Error::FitFailed { k, source: Box::new(e) })?;
        fits.push(SweepFit::new(k, fit.model, &data)?);
    }
    let mut chosen = BTreeMap::new();
    for &method in &cfg.methods {
        let report = if method == Method::Dsc {
            let top = &fits.last().expect("kmax fit").model;
            dsc_select(&build_path(top), &data, cfg.epsilon.resolve(n)?)?
        } else {
            report_from_fits(&fits, n, method)?
        };
        chosen.insert(method, report.chosen);
    }
    Ok(chosen)
}

/// Runs a selection study: per grid size and replication, simulate (optionally
/// contaminated) data, fit once at `kmax` for DSC and at every order for the
/// baselines, and record each method's chosen order.
pub fn run_selection_study(cfg: &SelectionStudyConfig, opts: &RunOptions) -> Result<SelectionStudyResult> {
    let truth = cfg.validate()?;
    let sizes = cfg.grid.sizes()?;
    let checkpoint = match &opts.checkpoint {
        Some(path) => Checkpoint::open(path, "selection", &config_digest(cfg)?)?,
        None => Checkpoint::disabled(),
    };
    let pending: Vec<(usize, usize, usize)> = sizes
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| (0..cfg.reps).map(move |r| (i, n, r)))
        .filter(|&(i, _, r)| !checkpoint.done().contains_key(&(i, r)))
        .collect();
    let fresh: Vec<SelectionRecord> = thread_pool(opts)?.install(|| {
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
    let records: Vec<SelectionRecord> = all
        .into_values()
        .filter(|r| r.n_index < sizes.len() && r.rep < cfg.reps)
        .collect();
    let total = records.len();
    let skipped = records.iter().filter(|r| r.error.is_some()).count();
    check_failures(skipped, total)?;

    let k0 = truth.len();
    let mut rows = Vec::new();
    for (i, &n) in sizes.iter().enumerate() {
        for &method in &cfg.methods {
            let picks: Vec<usize> = records
                .iter()
                .filter(|r| r.n_index == i)
                .filter_map(|r| r.chosen.get(&method).copied())
                .collect();
            if picks.is_empty() {
                continue;
            }
            let m = picks.len() as f64;
            rows.push(SelectionRow {
                n,
                method,
                proportion_correct: picks.iter().filter(|&&k| k == k0).count() as f64 / m,
                mean_chosen: picks.iter().sum::<usize>() as f64 / m,
                reps_used: picks.len(),
            });
        }
    }
    Ok(SelectionStudyResult {
        true_k: k0,
        rows,
        records,
        skipped,
        total,
    })
}
