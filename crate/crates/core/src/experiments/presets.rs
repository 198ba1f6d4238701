//! Named study configurations.
//!
//! `fig3a`, `fig3b`, `fig3c`, `fig4` and `fig5` use the published grids and replication
//! counts. Each also has a `-desk` variant with the reduced grids that finish in
//! minutes on a workstation.

use serde::{Deserialize, Serialize};

use super::{NGrid, RateSetting, RateStudyConfig, SelectionStudyConfig};
use crate::error::{Error, Result};
use crate::metrics::LossKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "snake_case")]
pub enum Preset {
    Rate(RateStudyConfig),
    Selection(SelectionStudyConfig),
}

pub const NAMES: [&str; 10] = [
    "fig3a",
    "fig3b",
    "fig3c",
    "fig4",
    "fig5",
    "fig3a-desk",
    "fig3b-desk",
    "fig3c-desk",
    "fig4-desk",
    "fig5-desk",
];

/// Contamination level used for the misspecified selection study.
pub const DEFAULT_CONTAMINATION: f64 = 0.05;

fn rate(setting: RateSetting, grid: NGrid, reps: usize, losses: Vec<LossKind>) -> Preset {
    Preset::Rate(RateStudyConfig {
        setting,
        grid,
        reps,
        losses,
        ..RateStudyConfig::default()
    })
}

fn selection(grid: NGrid, reps: usize, contamination_eps: f64) -> Preset {
    Preset::Selection(SelectionStudyConfig {
        grid,
        reps,
        contamination_eps,
        ..SelectionStudyConfig::default()
    })
}

fn grid(n_min: usize, n_max: usize, count: usize) -> NGrid {
    NGrid { n_min, n_max, count }
}

pub fn preset(name: &str) -> Result<Preset> {
    use LossKind::*;
    let merged = RateSetting::Merged { k: 4 };
    let over = RateSetting::Overfit { k: 4 };
    let p = match name {
        "fig3a" => rate(RateSetting::Exact, grid(100, 50_000, 100), 30, vec![Vdfra, Vde]),
        "fig3b" => rate(over, grid(338, 100_000, 165), 40, vec![Vdfra, Vdo]),
        "fig3c" => rate(merged, grid(100, 100_000, 200), 40, vec![Vdfra, Vde]),
        "fig4" => selection(grid(1000, 50_000, 32), 25, 0.0),
        // The contaminated study's grid is not published; it reuses the clean one.
        "fig5" => selection(grid(1000, 50_000, 32), 25, DEFAULT_CONTAMINATION),
        "fig3a-desk" => rate(RateSetting::Exact, grid(100, 10_000, 12), 10, vec![Vde, Vdfra]),
        "fig3b-desk" => rate(over, grid(100, 10_000, 12), 10, vec![Vdfra, Vdo]),
        "fig3c-desk" => rate(merged, grid(100, 10_000, 12), 10, vec![Vde, Vdfra]),
        "fig4-desk" => selection(grid(20_000, 20_000, 1), 15, 0.0),
        "fig5-desk" => selection(grid(2_000, 20_000, 3), 15, DEFAULT_CONTAMINATION),
        other => {
            return Err(Error::input(format!(
                "unknown preset {other:?}; expected one of {}",
                NAMES.join(", ")
            )))
        }
    };
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in NAMES {
            match preset(name).unwrap() {
                Preset::Rate(c) => {
                    c.validate().unwrap();
                }
                Preset::Selection(c) => {
                    c.validate().unwrap();
                }
            }
        }
        assert!(preset("fig9").is_err());
    }

    #[test]
    fn published_grids() {
        let Preset::Rate(c) = preset("fig3b").unwrap() else { panic!() };
        assert_eq!((c.grid.n_min, c.grid.n_max, c.grid.count, c.reps), (338, 100_000, 165, 40));
        let Preset::Selection(c) = preset("fig4").unwrap() else { panic!() };
        assert_eq!((c.grid.n_min, c.grid.n_max, c.grid.count, c.reps), (1000, 50_000, 32, 25));
    }
}
