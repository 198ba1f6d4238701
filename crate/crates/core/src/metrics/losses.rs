use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExpertAtom, MixingMeasure};
use crate::scalar::{log_sum_exp, softmax_in_place, Scalar};

use super::nelder_mead::{nelder_mead, NelderMeadOptions};
use super::voronoi::{voronoi_cells, VoronoiPartition};

/// Exponent applied to the over-covered directions of a cell holding `m` fitted atoms.
///
/// `rbar(2) = 4` and `rbar(3) = 6` are exact. For `m >= 4` only the lower bound 7 is
/// known and is used as the value. `rbar(1) = 1` is a placeholder: singleton cells
/// never use the exponent.
pub fn rbar(m: usize) -> Result<u32> {
    match m {
        0 => Err(Error::input("rbar is undefined for an empty cell")),
        1 => Ok(1),
        2 => Ok(4),
        3 => Ok(6),
        _ => Ok(7),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Exact-fit loss.
    Vde,
    /// Over-fit loss: adds `rbar`-powered penalties in multi-covered cells.
    Vdo,
    /// Fast-rate-aware loss: adds the merged-moment block sums to the over-fit loss.
    Vdfra,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Vde => "vde",
            LossKind::Vdo => "vdo",
            LossKind::Vdfra => "vdfra",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vde" => Ok(LossKind::Vde),
            "vdo" => Ok(LossKind::Vdo),
            "vdfra" => Ok(LossKind::Vdfra),
            other => Err(Error::input(format!("unknown loss {other:?}"))),
        }
    }
}

/// Minimiser of a loss over softmax translations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationOptimum<T> {
    pub t0: T,
    pub t1: Vec<T>,
    pub value: T,
}

/// Brings `g` into the gauge of `truth`: weights rescaled to the same total and
/// gate slopes shifted to the same weighted mean. Every loss is evaluated on this
/// representative, so losses are invariant to translating `g`.
pub fn align_gauge<T: Scalar>(g: &MixingMeasure<T>, truth: &MixingMeasure<T>) -> Result<MixingMeasure<T>> {
    if g.dim() != truth.dim() {
        return Err(Error::DimensionMismatch {
            expected: truth.dim(),
            found: g.dim(),
        });
    }
    // Log total weight and weight-averaged slope, computed in log space so that
    // fitted models with extreme intercepts do not overflow.
    let centre = |m: &MixingMeasure<T>| {
        let mut p: Vec<T> = m.atoms().iter().map(|a| a.omega0).collect();
        let log_total = softmax_in_place(&mut p);
        let mut c = vec![T::zero(); m.dim()];
        for (atom, &pi) in m.atoms().iter().zip(&p) {
            for (ci, &s) in c.iter_mut().zip(&atom.omega1) {
                *ci += pi * s;
            }
        }
        (log_total, c)
    };
    let (wg, cg) = centre(g);
    let (w0, c0) = centre(truth);
    let shift: Vec<T> = c0.iter().zip(&cg).map(|(&a, &b)| a - b).collect();
    g.translate(w0 - wg, &shift)
}

/// Breakdown of a loss integrand at a fixed translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms<T> {
    /// `sum_k | sum_{l in A_k} w_l - exp(omega0_k^0 + t0) |`
    pub weight_mismatch: T,
    /// First-order distances of singleton cells.
    pub singleton: T,
    /// `rbar`-powered penalties of multi-covered cells.
    pub overfit: T,
    /// Merged-moment block sums of multi-covered cells.
    pub merged_moments: T,
}

impl<T: Scalar> LossTerms<T> {
    pub fn total(&self, kind: LossKind) -> T {
        let base = self.weight_mismatch + self.singleton;
        match kind {
            LossKind::Vde => base,
            LossKind::Vdo => base + self.overfit,
            LossKind::Vdfra => base + self.overfit + self.merged_moments,
        }
    }
}

/// A loss between a candidate `g` and a reference `truth`, as a function of `(t0, t1)`.
#[derive(Debug, Clone)]
pub struct LossObjective<T> {
    kind: LossKind,
    aligned: MixingMeasure<T>,
    truth: MixingMeasure<T>,
    cells: VoronoiPartition,
    rbars: Vec<u32>,
}

impl<T: Scalar> LossObjective<T> {
    pub fn new(kind: LossKind, g: &MixingMeasure<T>, truth: &MixingMeasure<T>) -> Result<Self> {
        let aligned = align_gauge(g, truth)?;
        let cells = voronoi_cells(&aligned, truth)?;
        let rbars = cells
            .cells
            .iter()
            .map(|c| if c.is_empty() { Ok(0) } else { rbar(c.len()) })
            .collect::<Result<Vec<_>>>()?;
        Ok(LossObjective {
            kind,
            aligned,
            truth: truth.clone(),
            cells,
            rbars,
        })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn cells(&self) -> &VoronoiPartition {
        &self.cells
    }

    /// The gauge-aligned candidate the terms are computed on.
    pub fn aligned(&self) -> &MixingMeasure<T> {
        &self.aligned
    }

    pub fn dim(&self) -> usize {
        self.truth.dim()
    }

    pub fn terms(&self, t0: T, t1: &[T]) -> LossTerms<T> {
        let dim = self.dim();
        let atoms = self.aligned.atoms();
        let mut out = LossTerms {
            weight_mismatch: T::zero(),
            singleton: T::zero(),
            overfit: T::zero(),
            merged_moments: T::zero(),
        };
        let mut dw = vec![T::zero(); dim];
        for (k, (cell, truth)) in self.cells.cells.iter().zip(self.truth.atoms()).enumerate() {
            let mass: T = cell.iter().map(|&l| atoms[l].weight()).sum();
            out.weight_mismatch += (mass - (truth.omega0 + t0).exp()).abs();
            if cell.len() == 1 {
                let atom = &atoms[cell[0]];
                slope_gap(atom, truth, t1, &mut dw);
                let mut sq = dw.iter().map(|&v| v * v).sum::<T>();
                sq += atom.a.iter().zip(&truth.a).map(|(&p, &q)| (p - q) * (p - q)).sum::<T>();
                sq += (atom.b - truth.b).powi(2) + (atom.sigma - truth.sigma).powi(2);
                out.singleton += atom.weight() * sq.sqrt();
                continue;
            }
            if cell.len() < 2 {
                continue;
            }
            let r = T::from_u32(self.rbars[k]).unwrap();
            let half_r = r * T::c(0.5);
            let mut m_b = T::zero();
            let mut m_s = T::zero();
            let mut m_w = vec![T::zero(); dim];
            let mut m_a = vec![T::zero(); dim];
            let mut m_ww = vec![T::zero(); dim * dim];
            for &l in cell {
                let atom = &atoms[l];
                let w = atom.weight();
                slope_gap(atom, truth, t1, &mut dw);
                let db = atom.b - truth.b;
                let ds = atom.sigma - truth.sigma;
                let gate_sq = dw.iter().map(|&v| v * v).sum::<T>() + db * db;
                let expert_sq = atom.a.iter().zip(&truth.a).map(|(&p, &q)| (p - q) * (p - q)).sum::<T>() + ds * ds;
                out.overfit += w * (gate_sq.sqrt().powf(r) + expert_sq.sqrt().powf(half_r));

                m_b += w * db;
                m_s += w * (db * db + ds);
                for d in 0..dim {
                    m_w[d] += w * dw[d];
                    m_a[d] += w * (dw[d] * db + (atom.a[d] - truth.a[d]));
                    for e in 0..dim {
                        m_ww[d * dim + e] += w * dw[d] * dw[e];
                    }
                }
            }
            let norm = |v: &[T]| v.iter().map(|&x| x * x).sum::<T>().sqrt();
            out.merged_moments += m_b.abs() + norm(&m_w) + m_s.abs() + norm(&m_a) + norm(&m_ww);
        }
        out
    }

    /// The loss integrand at a fixed translation.
    pub fn integrand(&self, t0: T, t1: &[T]) -> T {
        self.terms(t0, t1).total(self.kind)
    }

    /// Additional starting point for the infimum: `t1` is the weighted mean slope
    /// offset over singleton cells (all cells if none are singleton) and `t0` the log
    /// ratio of total masses.
    pub fn heuristic_start(&self) -> (T, Vec<T>) {
        let dim = self.dim();
        let atoms = self.aligned.atoms();
        let log_total = |m: &MixingMeasure<T>| log_sum_exp(&m.atoms().iter().map(|a| a.omega0).collect::<Vec<_>>());
        let t0 = log_total(&self.aligned) - log_total(&self.truth);
        let any_singleton = self.cells.cells.iter().any(|c| c.len() == 1);
        let mut t1 = vec![T::zero(); dim];
        let mut mass = T::zero();
        for (cell, truth) in self.cells.cells.iter().zip(self.truth.atoms()) {
            if any_singleton && cell.len() != 1 {
                continue;
            }
            for &l in cell {
                let w = atoms[l].weight();
                mass += w;
                for d in 0..dim {
                    t1[d] += w * (atoms[l].omega1[d] - truth.omega1[d]);
                }
            }
        }
        if mass > T::zero() {
            for v in t1.iter_mut() {
                *v /= mass;
            }
        }
        (t0, t1)
    }

    pub fn minimize(&self, opts: &NelderMeadOptions) -> Result<TranslationOptimum<T>> {
        let dim = self.dim();
        let (h0, h1) = self.heuristic_start();
        let mut start = Vec::with_capacity(dim + 1);
        start.push(h0);
        start.extend(h1);
        translation_infimum(|t0, t1| self.integrand(t0, t1), dim, &[start], opts)
    }
}

/// `omega1_l - omega1_k^0 - t1` into `out`.
#[inline]
fn slope_gap<T: Scalar>(atom: &ExpertAtom<T>, truth: &ExpertAtom<T>, t1: &[T], out: &mut [T]) {
    for d in 0..out.len() {
        out[d] = atom.omega1[d] - truth.omega1[d] - t1[d];
    }
}

/// Number of restarts from the incumbent after the initial runs.
const RESTARTS: usize = 4;

/// Minimises `objective(t0, t1)` over `(t0, t1) in R x R^dim` by multistart
/// Nelder–Mead: one run from the origin, one from each extra start, then restarts
/// from the incumbent with a shrinking simplex while they keep improving.
pub fn translation_infimum<T: Scalar, F: Fn(T, &[T]) -> T>(
    objective: F,
    dim: usize,
    extra_starts: &[Vec<T>],
    opts: &NelderMeadOptions,
) -> Result<TranslationOptimum<T>> {
    let f = |p: &[T]| objective(p[0], &p[1..]);
    let origin = vec![T::zero(); dim + 1];
    let at_origin = f(&origin);
    if !at_origin.is_finite() {
        return Err(Error::input("objective is not finite at the origin"));
    }
    let mut best = nelder_mead(f, &origin, opts);
    let mut evaluations = best.evaluations;
    for s in extra_starts {
        if s.len() != dim + 1 || s.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let run = nelder_mead(f, s, opts);
        evaluations += run.evaluations;
        if run.value < best.value {
            best = run;
        }
    }
    let mut step = opts.initial_step;
    for _ in 0..RESTARTS {
        step *= 0.1;
        let run = nelder_mead(f, &best.point, &NelderMeadOptions { initial_step: step, ..*opts });
        evaluations += run.evaluations;
        let improved = run.value < best.value;
        if run.value <= best.value {
            best = run;
        }
        if !improved {
            break;
        }
    }
    if !best.converged {
        return Err(Error::NotConverged {
            best_value: best.value.as_f64(),
            best_point: best.point.iter().map(|v| v.as_f64()).collect(),
            evaluations,
        });
    }
    Ok(TranslationOptimum {
        t0: best.point[0],
        t1: best.point[1..].to_vec(),
        value: best.value,
    })
}

/// A solved loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport<T> {
    pub kind: LossKind,
    pub value: T,
    pub t0: T,
    pub t1: Vec<T>,
    pub cells: VoronoiPartition,
}

pub fn loss<T: Scalar>(kind: LossKind, g: &MixingMeasure<T>, truth: &MixingMeasure<T>) -> Result<LossReport<T>> {
    loss_with(kind, g, truth, &NelderMeadOptions::default())
}

pub fn loss_with<T: Scalar>(
    kind: LossKind,
    g: &MixingMeasure<T>,
    truth: &MixingMeasure<T>,
    opts: &NelderMeadOptions,
) -> Result<LossReport<T>> {
    let objective = LossObjective::new(kind, g, truth)?;
    let opt = objective.minimize(opts)?;
    Ok(LossReport {
        kind,
        value: opt.value.max(T::zero()),
        t0: opt.t0,
        t1: opt.t1,
        cells: objective.cells,
    })
}

/// Exact-fit Voronoi loss.
pub fn vde<T: Scalar>(g: &MixingMeasure<T>, truth: &MixingMeasure<T>) -> Result<T> {
    Ok(loss(LossKind::Vde, g, truth)?.value)
}

/// Over-fit Voronoi loss.
pub fn vdo<T: Scalar>(g: &MixingMeasure<T>, truth: &MixingMeasure<T>) -> Result<T> {
    Ok(loss(LossKind::Vdo, g, truth)?.value)
}

/// Fast-rate-aware Voronoi loss.
pub fn vdfra<T: Scalar>(g: &MixingMeasure<T>, truth: &MixingMeasure<T>) -> Result<T> {
    Ok(loss(LossKind::Vdfra, g, truth)?.value)
}
