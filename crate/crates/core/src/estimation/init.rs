//! Starting points for EM.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::model::{Dataset, ExpertAtom, MixingMeasure};
use crate::scalar::Scalar;
use crate::seeding::rng_from_seed;

/// Lloyd iterations per k-means restart.
const KMEANS_MAX_ITER: usize = 100;
/// Number of k-means++ restarts; the lowest-inertia run is kept.
const KMEANS_RESTARTS: usize = 4;

/// A k-means clustering of row-major points.
#[derive(Debug, Clone)]
pub struct KMeans<T> {
    /// Row-major `k x dim` centroids.
    pub centroids: Vec<T>,
    pub labels: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: T,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn plus_plus_seed<T: Scalar>(points: &[T], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centroids[..dim]).as_f64()).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), &centroids[start..start + dim]).as_f64());
        }
    }
    centroids
}

fn lloyd<T: Scalar>(points: &[T], dim: usize, k: usize, mut centroids: Vec<T>) -> KMeans<T> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = T::infinity();
            for c in 0..k {
                let d = sq_dist(row(i), &centroids[c * dim..(c + 1) * dim]);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![T::zero(); k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for d in 0..dim {
                sums[labels[i] * dim + d] += row(i)[d];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster at the point farthest from its centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(row(a), &centroids[labels[a] * dim..(labels[a] + 1) * dim]);
                        let db = sq_dist(row(b), &centroids[labels[b] * dim..(labels[b] + 1) * dim]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centroids[c * dim..(c + 1) * dim].copy_from_slice(row(far));
                labels[far] = c;
                changed = true;
            } else {
                let cnt = T::from_usize(counts[c]).unwrap();
                for d in 0..dim {
                    centroids[c * dim + d] = sums[c * dim + d] / cnt;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(row(i), &centroids[labels[i] * dim..(labels[i] + 1) * dim]))
        .sum();
    KMeans {
        centroids,
        labels,
        inertia,
    }
}

/// k-means++ seeding followed by Lloyd iterations, best of several restarts.
pub fn kmeans<T: Scalar>(points: &[T], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<KMeans<T>> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::input("point buffer is not a whole number of rows"));
    }
    let n = points.len() / dim;
    if k == 0 || n < k {
        return Err(Error::input(format!("cannot form {k} clusters from {n} points")));
    }
    let mut best: Option<KMeans<T>> = None;
    for _ in 0..KMEANS_RESTARTS {
        let seeds = plus_plus_seed(points, dim, k, rng);
        let run = lloyd(points, dim, k, seeds);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

/// Weighted least squares of `y` on `[x, 1]`. Returns `None` when the weighted
/// design is singular.
pub(crate) fn weighted_least_squares<T: Scalar>(
    data: &Dataset<T>,
    weight: impl Fn(usize) -> T,
) -> Option<(Vec<T>, T)> {
    let dim = data.dim();
    let p = dim + 1;
    let mut gram = vec![T::zero(); p * p];
    let mut rhs = vec![T::zero(); p];
    let mut xt = vec![T::one(); p];
    for (n, (x, y)) in data.iter().enumerate() {
        let w = weight(n);
        if w == T::zero() {
            continue;
        }
        xt[..dim].copy_from_slice(x);
        for i in 0..p {
            let wi = w * xt[i];
            rhs[i] += wi * y;
            for j in i..p {
                gram[i * p + j] += wi * xt[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[i * p + j] = gram[j * p + i];
        }
    }
    if !cholesky_solve(&mut gram, p, &mut rhs) || rhs.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let b = rhs[dim];
    rhs.truncate(dim);
    Some((rhs, b))
}

/// k-means++ on the joined `(x, y)` vectors, then one least-squares expert per cluster.
pub fn init_kmeans<T: Scalar>(data: &Dataset<T>, k: usize, seed: u64, sigma_floor: T) -> Result<MixingMeasure<T>> {
    let n = data.len();
    if n < k {
        return Err(Error::input(format!("need at least {k} points, got {n}")));
    }
    if k == 0 {
        return Err(Error::input("number of experts must be positive"));
    }
    let dim = data.dim();
    let mut joined = Vec::with_capacity(n * (dim + 1));
    for (x, y) in data.iter() {
        joined.extend_from_slice(x);
        joined.push(y);
    }
    let mut rng = rng_from_seed(seed);
    let clusters = kmeans(&joined, dim + 1, k, &mut rng)?;

    let mut atoms = Vec::with_capacity(k);
    for c in 0..k {
        let member = |i: usize| if clusters.labels[i] == c { T::one() } else { T::zero() };
        let count = clusters.labels.iter().filter(|&&l| l == c).count();
        let (a, b) = weighted_least_squares(data, member).unwrap_or_else(|| {
            let mean = data
                .iter()
                .enumerate()
                .filter(|(i, _)| clusters.labels[*i] == c)
                .map(|(_, (_, y))| y)
                .sum::<T>()
                / T::from_usize(count.max(1)).unwrap();
            (vec![T::zero(); dim], mean)
        });
        let mut rss = T::zero();
        for (i, (x, y)) in data.iter().enumerate() {
            if clusters.labels[i] == c {
                let r = y - crate::scalar::dot(&a, x) - b;
                rss += r * r;
            }
        }
        let sigma = (rss / T::from_usize(count.max(1)).unwrap()).max(sigma_floor);
        let omega0 = (T::from_usize(count.max(1)).unwrap() / T::from_usize(n).unwrap()).ln();
        atoms.push(ExpertAtom::new(omega0, vec![T::zero(); dim], a, b, sigma)?);
    }
    MixingMeasure::new(dim, atoms)
}

/// Favourable initialisation near a known truth: `[K]` is split round-robin into
/// `K0` groups and every atom of group `t` is the `t`-th true atom plus
/// `Normal(0, scale^2)` noise on each coordinate. The variance is perturbed on
/// the log scale.
pub fn init_perturbed<T: Scalar>(truth: &MixingMeasure<T>, k: usize, scale: T, seed: u64) -> Result<MixingMeasure<T>> {
    let k0 = truth.len();
    if k < k0 {
        return Err(Error::input(format!(
            "cannot cover {k0} true atoms with {k} fitted atoms"
        )));
    }
    if !(scale >= T::zero()) {
        return Err(Error::input("perturbation scale must be nonnegative"));
    }
    let mut rng = rng_from_seed(seed);
    let mut noise = || scale * T::c(StandardNormal.sample(&mut rng));
    let atoms = (0..k)
        .map(|l| {
            let t = &truth.atoms()[l % k0];
            let omega0 = t.omega0 + noise();
            let omega1 = t.omega1.iter().map(|&v| v + noise()).collect();
            let a = t.a.iter().map(|&v| v + noise()).collect();
            let b = t.b + noise();
            let sigma = (t.sigma.ln() + noise()).exp();
            ExpertAtom::new(omega0, omega1, a, b, sigma)
        })
        .collect::<Result<Vec<_>>>()?;
    MixingMeasure::new(truth.dim(), atoms)
}

/// Flat gates, zero slopes, intercepts at `k` distinct random responses and the
/// marginal response variance.
pub fn init_random<T: Scalar>(data: &Dataset<T>, k: usize, seed: u64, sigma_floor: T) -> Result<MixingMeasure<T>> {
    let n = data.len();
    if k == 0 || n < k {
        return Err(Error::input(format!("need at least {k} points, got {n}")));
    }
    let mut rng = rng_from_seed(seed);
    let nf = T::from_usize(n).unwrap();
    let mean = data.ys().iter().copied().sum::<T>() / nf;
    let var = data.ys().iter().map(|&y| (y - mean) * (y - mean)).sum::<T>() / nf;
    let sigma = var.max(sigma_floor);
    let atoms = sample_indices(&mut rng, n, k)
        .into_iter()
        .map(|i| ExpertAtom::new(T::zero(), vec![T::zero(); data.dim()], vec![T::zero(); data.dim()], data.y(i), sigma))
        .collect::<Result<Vec<_>>>()?;
    MixingMeasure::new(data.dim(), atoms)
}
