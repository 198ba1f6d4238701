use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MixingMeasure;
use crate::scalar::Scalar;

/// Assignment of fitted atoms to their nearest true atom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoronoiPartition {
    /// `cells[k]` lists the fitted atoms nearest to true atom `k`, in increasing order.
    pub cells: Vec<Vec<usize>>,
    /// Number of fitted atoms equidistant from two or more true atoms.
    pub tie_breaks: usize,
}

impl VoronoiPartition {
    /// True-atom index for each fitted atom.
    pub fn assignment(&self) -> Vec<usize> {
        let n = self.cells.iter().map(Vec::len).sum();
        let mut out = vec![0; n];
        for (k, cell) in self.cells.iter().enumerate() {
            for &l in cell {
                out[l] = k;
            }
        }
        out
    }
}

/// Assigns every atom of `g` to the atom of `truth` whose `(omega1, a, b, sigma)` is
/// nearest in Euclidean distance. Ties go to the smallest true index and are counted.
pub fn voronoi_cells<T: Scalar>(g: &MixingMeasure<T>, truth: &MixingMeasure<T>) -> Result<VoronoiPartition> {
    if g.dim() != truth.dim() {
        return Err(Error::DimensionMismatch {
            expected: truth.dim(),
            found: g.dim(),
        });
    }
    let true_thetas: Vec<Vec<T>> = truth.atoms().iter().map(|a| a.theta()).collect();
    let mut cells = vec![Vec::new(); truth.len()];
    let mut tie_breaks = 0;
    for (l, atom) in g.atoms().iter().enumerate() {
        let theta = atom.theta();
        let mut best = 0;
        let mut best_d = T::infinity();
        let mut tied = false;
        for (k, t) in true_thetas.iter().enumerate() {
            let d: T = theta.iter().zip(t).map(|(&p, &q)| (p - q) * (p - q)).sum();
            if d < best_d {
                best_d = d;
                best = k;
                tied = false;
            } else if d == best_d {
                tied = true;
            }
        }
        if tied {
            tie_breaks += 1;
        }
        cells[best].push(l);
    }
    Ok(VoronoiPartition { cells, tie_breaks })
}
