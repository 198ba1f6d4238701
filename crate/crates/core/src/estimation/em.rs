use crate::error::{Error, Result};
use crate::model::{Dataset, ExpertAtom, MixingMeasure, DENSITY_FLOOR};
use crate::scalar::{dot, softmax_in_place, Scalar};

use super::gating::{fit_gates, Gates, GatingData};
use super::init::{init_kmeans, init_perturbed, init_random, weighted_least_squares};
use super::{FitConfig, FitResult, InitScheme};

/// Responsibilities into `resp` (row-major `N x K`); returns the average log-likelihood.
fn e_step<T: Scalar>(model: &MixingMeasure<T>, data: &Dataset<T>, resp: &mut [T]) -> Result<T> {
    let k = model.len();
    let floor = T::c(DENSITY_FLOOR.ln());
    let mut total = T::zero();
    for (n, (x, y)) in data.iter().enumerate() {
        let row = &mut resp[n * k..(n + 1) * k];
        let lp = model.joint_log_terms(x, y, row);
        if lp.is_nan() || lp == T::infinity() {
            return Err(Error::NonFiniteLogLikelihood { index: n });
        }
        softmax_in_place(row);
        total += lp.max(floor);
    }
    Ok(total / T::from_usize(data.len()).unwrap())
}

/// Weighted least-squares expert update for column `k` of `resp`, with the
/// weighted residual variance floored at `sigma_floor`. A singular weighted
/// design keeps the previous regression coefficients.
pub fn expert_m_step<T: Scalar>(
    data: &Dataset<T>,
    resp: &[T],
    k: usize,
    n_experts: usize,
    previous: &ExpertAtom<T>,
    sigma_floor: T,
) -> (Vec<T>, T, T) {
    let w = |n: usize| resp[n * n_experts + k];
    let total: T = (0..data.len()).map(w).sum();
    if !(total > T::zero()) {
        return (previous.a.clone(), previous.b, previous.sigma);
    }
    let (a, b) = weighted_least_squares(data, w).unwrap_or_else(|| (previous.a.clone(), previous.b));
    let mut rss = T::zero();
    for (n, (x, y)) in data.iter().enumerate() {
        let r = y - dot(&a, x) - b;
        rss += w(n) * r * r;
    }
    let sigma = (rss / total).max(sigma_floor);
    (a, b, sigma)
}

fn all_finite<T: Scalar>(g: &MixingMeasure<T>) -> bool {
    g.atoms().iter().all(|a| {
        a.omega0.is_finite()
            && a.b.is_finite()
            && a.sigma.is_finite()
            && a.omega1.iter().chain(&a.a).all(|v| v.is_finite())
    })
}

/// Fits a `cfg.k`-expert model by EM from `init`.
///
/// Each iteration computes responsibilities, refits every expert by weighted
/// least squares and refits the gates with damped Newton steps. The average
/// log-likelihood is non-decreasing along the run.
pub fn em_fit<T: Scalar>(data: &Dataset<T>, cfg: &FitConfig, init: &MixingMeasure<T>) -> Result<FitResult<T>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::input("dataset is empty"));
    }
    if init.len() != cfg.k {
        return Err(Error::input(format!(
            "initial model has {} experts, config asks for {}",
            init.len(),
            cfg.k
        )));
    }
    if init.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            found: init.dim(),
        });
    }
    let floor = T::c(cfg.sigma_floor);
    let ridge = T::c(cfg.ridge);
    let newton_tol = T::c(cfg.newton_tol);
    let tol = T::c(cfg.tol);
    let k = cfg.k;
    let dim = data.dim();

    let mut atoms: Vec<ExpertAtom<T>> = init
        .atoms()
        .iter()
        .map(|a| ExpertAtom {
            sigma: a.sigma.max(floor),
            ..a.clone()
        })
        .collect();
    let mut model = MixingMeasure::new(dim, atoms.clone())?.normalize_baseline();
    let mut resp = vec![T::zero(); data.len() * k];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let ll = e_step(&model, data, &mut resp)?;
        if let Some(&prev) = trace.last() {
            trace.push(ll);
            let change: T = ll - prev;
            if change.abs() < tol {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        if iterations == cfg.max_iter {
            break;
        }
        iterations += 1;

        for (j, atom) in atoms.iter_mut().enumerate() {
            let (a, b, sigma) = expert_m_step(data, &resp, j, k, atom, floor);
            atom.a = a;
            atom.b = b;
            atom.sigma = sigma;
        }
        let gates = Gates::from_measure(&model);
        let gating = GatingData {
            xs: data.xs_flat(),
            dim,
            resp: &resp,
            k,
        };
        let gates = fit_gates(&gates, &gating, ridge, cfg.newton_max_iter, newton_tol)?;
        for (j, atom) in atoms.iter_mut().enumerate() {
            atom.omega0 = gates.omega0[j];
            atom.omega1 = gates.slope(j).to_vec();
        }
        let candidate = MixingMeasure::new(dim, atoms.clone());
        match candidate {
            Ok(m) if all_finite(&m) => model = m,
            _ => return Err(Error::NonFiniteParameters { iteration: iterations }),
        }
    }

    Ok(FitResult {
        model: model.normalize_baseline(),
        loglik_trace: trace,
        iterations,
        converged,
    })
}

/// Builds the starting point named by `cfg.init` and runs [`em_fit`].
/// `truth` is required for [`InitScheme::PerturbedTruth`].
pub fn fit_with_config<T: Scalar>(
    data: &Dataset<T>,
    cfg: &FitConfig,
    truth: Option<&MixingMeasure<T>>,
) -> Result<FitResult<T>> {
    cfg.validate()?;
    let floor = T::c(cfg.sigma_floor);
    let init = match cfg.init {
        InitScheme::Kmeans => init_kmeans(data, cfg.k, cfg.seed, floor)?,
        InitScheme::Random => init_random(data, cfg.k, cfg.seed, floor)?,
        InitScheme::PerturbedTruth => {
            let truth = truth.ok_or_else(|| Error::input("perturbed initialisation needs a reference model"))?;
            init_perturbed(truth, cfg.k, T::c(cfg.perturb_scale), cfg.seed)?
        }
    };
    em_fit(data, cfg, &init)
}
