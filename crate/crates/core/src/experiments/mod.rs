//! Simulation studies: loss-versus-`N` rate curves and order-selection frequencies.
//!
//! Every replication draws its data and initialisation from seeds derived from the
//! study seed and the replication's `(grid index, replication)` key, so results do not
//! depend on the number of workers or on the order in which replications finish.

mod checkpoint;
pub mod presets;
mod rate;
mod select;

pub use checkpoint::Checkpoint;
pub use rate::{run_rate_study, RateCurve, RateRecord, RateRow, RateSetting, RateStudyConfig, RateStudyResult, Stage};
pub use select::{
    run_selection_study, SelectionRecord, SelectionRow, SelectionStudyConfig, SelectionStudyResult,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::datagen::truth_by_name;
use crate::error::{Error, Result};
use crate::model::MixingMeasure;

/// Ground truth of a study: a registry name or an explicit model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruthRef {
    Named(String),
    Model(MixingMeasure<f64>),
}

impl TruthRef {
    pub fn resolve(&self) -> Result<MixingMeasure<f64>> {
        match self {
            TruthRef::Named(name) => truth_by_name(name),
            TruthRef::Model(m) => Ok(m.clone()),
        }
    }
}

impl Default for TruthRef {
    fn default() -> Self {
        TruthRef::Named("g0_2".into())
    }
}

/// Sample sizes on a logarithmic grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NGrid {
    pub n_min: usize,
    pub n_max: usize,
    pub count: usize,
}

impl NGrid {
    /// `count` sizes log-spaced over `[n_min, n_max]`, rounded to integers; sizes that
    /// collide after rounding are kept once.
    pub fn sizes(&self) -> Result<Vec<usize>> {
        if self.n_min == 0 || self.n_max < self.n_min || self.count == 0 {
            return Err(Error::input("grid needs 1 <= n_min <= n_max and count >= 1"));
        }
        if self.count == 1 {
            return Ok(vec![self.n_min]);
        }
        let (lo, hi) = ((self.n_min as f64).ln(), (self.n_max as f64).ln());
        let mut out: Vec<usize> = (0..self.count)
            .map(|i| (lo + (hi - lo) * i as f64 / (self.count - 1) as f64).exp().round() as usize)
            .collect();
        out.dedup();
        Ok(out)
    }
}

/// Execution settings that do not affect any result.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `SGMOE_THREADS` takes precedence, then this, then all cores.
    pub threads: Option<usize>,
    /// Replication log for resuming an interrupted study.
    pub checkpoint: Option<PathBuf>,
}

/// Resolved worker count.
pub fn worker_count(requested: Option<usize>) -> usize {
    let from_env = std::env::var("SGMOE_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok());
    from_env
        .or(requested)
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn thread_pool(opts: &RunOptions) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(opts.threads))
        .build()
        .map_err(|e| Error::input(format!("cannot start worker pool: {e}")))
}

/// Least-squares fit of `log(value)` on `log(n)`; returns `(slope, intercept)`.
pub fn slope_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Err(Error::input("slope fit needs at least three points"));
    }
    if let Some(&(n, v)) = points.iter().find(|&&(n, v)| !(n > 0.0 && v > 0.0 && v.is_finite())) {
        return Err(Error::input(format!("slope fit needs positive values, got ({n}, {v})")));
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::input("slope fit needs at least two distinct sizes"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Mean and sample standard deviation.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Fails the study when more than 10% of replications failed.
fn check_failures(skipped: usize, total: usize) -> Result<()> {
    if skipped * 10 > total {
        return Err(Error::TooManyFailures { skipped, total });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let ns: [f64; 4] = [100.0, 300.0, 1000.0, 5000.0];
        let (s, _) = slope_fit(&ns.map(|n| (n, 3.0 * n.powf(-0.5)))).unwrap();
        assert!((s + 0.5).abs() < 1e-12);
        let (s, c) = slope_fit(&ns.map(|n| (n, 2.0))).unwrap();
        assert!(s.abs() < 1e-12 && (c - 2f64.ln()).abs() < 1e-12);
        let (s, _) = slope_fit(&ns.map(|n| (n, n.powf(-0.25)))).unwrap();
        assert!((s + 0.25).abs() < 1e-12);
        assert!(slope_fit(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
        assert!(slope_fit(&[(1.0, 1.0), (2.0, 1.0)]).is_err());
    }

    #[test]
    fn grid_endpoints() {
        let g = NGrid { n_min: 100, n_max: 10_000, count: 12 }.sizes().unwrap();
        assert_eq!(g.len(), 12);
        assert_eq!((g[0], g[11]), (100, 10_000));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(NGrid { n_min: 5, n_max: 6, count: 10 }.sizes().unwrap(), vec![5, 6]);
        assert!(NGrid { n_min: 0, n_max: 6, count: 10 }.sizes().is_err());
    }

    #[test]
    fn failure_threshold() {
        assert!(check_failures(1, 10).is_ok());
        assert!(check_failures(2, 10).is_err());
    }
}
