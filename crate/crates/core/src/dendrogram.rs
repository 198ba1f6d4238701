//! Hierarchical aggregation of a mixing measure: repeatedly merge the closest pair
//! of atoms under a rate-weighted dissimilarity, recording the merge heights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExpertAtom, MixingMeasure};
use crate::scalar::{log_add_exp, Scalar};

/// Rate-weighted dissimilarity between two atoms:
///
/// `w_i w_j / (w_i + w_j) * (|(omega1, b)_i - (omega1, b)_j|^2 + |(a, sigma)_i - (a, sigma)_j|)`
///
/// with `w = exp(omega0)`. The harmonic prefactor is computed in log space.
pub fn dissimilarity<T: Scalar>(p: &ExpertAtom<T>, q: &ExpertAtom<T>) -> T {
    let pref = (-log_add_exp(-p.omega0, -q.omega0)).exp();
    let mut gate = (p.b - q.b).powi(2);
    for (&u, &v) in p.omega1.iter().zip(&q.omega1) {
        gate += (u - v).powi(2);
    }
    let mut expert = (p.sigma - q.sigma).powi(2);
    for (&u, &v) in p.a.iter().zip(&q.a) {
        expert += (u - v).powi(2);
    }
    pref * (gate + expert.sqrt())
}

/// Softmax-weighted aggregate of two atoms. Conserves the total weight and the
/// weighted moments of `omega1`, `b`, `b^2 + sigma` and `omega1 b + a`.
pub fn merge_pair<T: Scalar>(p: &ExpertAtom<T>, q: &ExpertAtom<T>) -> ExpertAtom<T> {
    let omega0 = log_add_exp(p.omega0, q.omega0);
    let wp = (p.omega0 - omega0).exp();
    let wq = (q.omega0 - omega0).exp();
    let omega1: Vec<T> = p.omega1.iter().zip(&q.omega1).map(|(&u, &v)| wp * u + wq * v).collect();
    let b = wp * p.b + wq * q.b;
    let (dbp, dbq) = (p.b - b, q.b - b);
    let a = (0..p.a.len())
        .map(|d| wp * ((p.omega1[d] - omega1[d]) * dbp + p.a[d]) + wq * ((q.omega1[d] - omega1[d]) * dbq + q.a[d]))
        .collect();
    let sigma = wp * (dbp * dbp + p.sigma) + wq * (dbq * dbq + q.sigma);
    ExpertAtom {
        omega0,
        omega1,
        a,
        b,
        sigma,
    }
}

/// One merge of the aggregation path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeRecord<T> {
    /// Number of atoms before the merge.
    pub level: usize,
    /// Merged indices `(i, j)` with `i < j`, in the level's atom order.
    pub pair: (usize, usize),
    /// Smallest pairwise dissimilarity at this level.
    pub height: T,
    /// The new atom, stored at index `i` of the next level.
    #[serde(skip)]
    pub merged_atom: ExpertAtom<T>,
}

/// Merges the closest pair of atoms (ties: lexicographically smallest `(i, j)`).
/// The aggregate takes position `i`; atom `j` is removed.
pub fn merge_step<T: Scalar>(g: &MixingMeasure<T>) -> Result<(MixingMeasure<T>, MergeRecord<T>)> {
    let atoms = g.atoms();
    if atoms.len() < 2 {
        return Err(Error::input("merging needs at least two atoms"));
    }
    let mut best = (0, 1);
    let mut height = T::infinity();
    for i in 0..atoms.len() {
        for j in i + 1..atoms.len() {
            let d = dissimilarity(&atoms[i], &atoms[j]);
            if d < height {
                height = d;
                best = (i, j);
            }
        }
    }
    let (i, j) = best;
    let merged = merge_pair(&atoms[i], &atoms[j]);
    let mut next = atoms.to_vec();
    next[i] = merged.clone();
    next.remove(j);
    let record = MergeRecord {
        level: atoms.len(),
        pair: best,
        height,
        merged_atom: merged,
    };
    Ok((MixingMeasure::new(g.dim(), next)?, record))
}

/// The aggregation path `G^(K), ..., G^(1)` of a mixing measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDendrogram<T>")]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Dendrogram<T> {
    /// `levels[i]` has `K - i` atoms.
    pub levels: Vec<MixingMeasure<T>>,
    pub merges: Vec<MergeRecord<T>>,
    /// `(h^(K), ..., h^(2))`.
    pub heights: Vec<T>,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
struct RawDendrogram<T> {
    levels: Vec<MixingMeasure<T>>,
    merges: Vec<RawMerge<T>>,
    heights: Vec<T>,
}

#[derive(Deserialize)]
struct RawMerge<T> {
    level: usize,
    pair: (usize, usize),
    height: T,
}

impl<T: Scalar> TryFrom<RawDendrogram<T>> for Dendrogram<T> {
    type Error = Error;

    fn try_from(raw: RawDendrogram<T>) -> Result<Self> {
        let top = raw.levels.first().map_or(0, MixingMeasure::len);
        let consistent = !raw.levels.is_empty()
            && raw.levels.iter().enumerate().all(|(i, m)| m.len() == top - i)
            && raw.merges.len() + 1 == raw.levels.len()
            && raw.heights.len() == raw.merges.len();
        if !consistent {
            return Err(Error::input("dendrogram levels, merges and heights are inconsistent"));
        }
        let merges = raw
            .merges
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                let (p, q) = m.pair;
                if m.level != top - i || p >= q || q >= m.level {
                    return Err(Error::input(format!("invalid merge record at position {i}")));
                }
                Ok(MergeRecord {
                    level: m.level,
                    pair: m.pair,
                    height: m.height,
                    merged_atom: raw.levels[i + 1].atoms()[p].clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dendrogram {
            levels: raw.levels,
            merges,
            heights: raw.heights,
        })
    }
}

impl<T: Scalar> Dendrogram<T> {
    /// Number of atoms at the top of the path.
    pub fn top(&self) -> usize {
        self.levels[0].len()
    }

    /// The measure with `kappa` atoms.
    pub fn level(&self, kappa: usize) -> Option<&MixingMeasure<T>> {
        let top = self.top();
        (1..=top).contains(&kappa).then(|| &self.levels[top - kappa])
    }

    /// `h^(kappa)`, the height of the merge leaving level `kappa`.
    pub fn height(&self, kappa: usize) -> Option<T> {
        let top = self.top();
        (2..=top).contains(&kappa).then(|| self.heights[top - kappa])
    }
}

/// Merges from `K` atoms down to one, recording every level and height.
pub fn build_path<T: Scalar>(g: &MixingMeasure<T>) -> Dendrogram<T> {
    let mut levels = vec![g.clone()];
    let mut merges = Vec::with_capacity(g.len().saturating_sub(1));
    while levels.last().expect("nonempty").len() > 1 {
        let (next, record) = merge_step(levels.last().expect("nonempty")).expect("level has two atoms");
        levels.push(next);
        merges.push(record);
    }
    let heights = merges.iter().map(|m| m.height).collect();
    Dendrogram { levels, merges, heights }
}
