//! Full-covariance Gaussian mixture fitted by expectation–maximization.
//!
//! Means are seeded with k-means++, every component starts from the shared
//! spherical covariance `mean(var(x)) · I`, and weights start uniform.
//! `reg_covar` is added to each covariance diagonal in every M-step.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{TopicError, TopicParams};
use crate::numkernel::{cholesky, gaussian_logpdf, lse, NumError, SpdMatrix};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum GmmError {
    #[error("invalid GMM input: {0}")]
    InvalidInput(String),
    #[error("component {component} kept collapsing after {restarts} restarts")]
    DegenerateComponent { component: usize, restarts: usize },
    #[error(transparent)]
    Num(#[from] NumError),
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GmmConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub reg_covar: f64,
}

impl GmmConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 100,
            tol: 1e-3,
            reg_covar: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmmFit<T> {
    pub means: Array2<T>,
    pub covariances: Vec<Array2<T>>,
    pub factors: Vec<SpdMatrix<T>>,
    pub weights: Array1<T>,
    pub final_loglik: T,
    /// Total data log-likelihood after every E-step.
    pub loglik_history: Vec<T>,
    pub responsibilities: Array2<T>,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
}

impl<T: Real> GmmFit<T> {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }
}

fn sq_dist<T: Real>(a: ndarray::ArrayView1<T>, b: ndarray::ArrayView1<T>) -> T {
    a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp<T: Real>(x: ArrayView2<T>, k: usize, rng: &mut ChaCha8Rng) -> Array2<T> {
    let n = x.nrows();
    let mut centers = Array2::zeros((k, x.ncols()));
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centers.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(x.row(i), x.row(first)).to_f64_lossy())
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centers.row_mut(c).assign(&x.row(pick));
        for i in 0..n {
            let d = sq_dist(x.row(i), x.row(pick)).to_f64_lossy();
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centers
}

/// Per-point log(w_k φ_k(x)) matrix and the total log-likelihood.
fn e_step<T: Real>(
    x: ArrayView2<T>,
    means: &Array2<T>,
    factors: &[SpdMatrix<T>],
    weights: &Array1<T>,
) -> Result<(Array2<T>, Vec<T>), NumError> {
    let k = weights.len();
    let rows: Vec<Result<(Vec<T>, T), NumError>> = x
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|xn| {
            let mut lp = Vec::with_capacity(k);
            for c in 0..k {
                lp.push(weights[c].ln() + gaussian_logpdf(xn, means.row(c), &factors[c])?);
            }
            let z = lse(&lp);
            let resp = lp.iter().map(|&v| (v - z).exp()).collect();
            Ok((resp, z))
        })
        .collect();
    let mut resp = Array2::zeros((x.nrows(), k));
    let mut point_ll = Vec::with_capacity(x.nrows());
    for (i, r) in rows.into_iter().enumerate() {
        let (row, z) = r?;
        resp.row_mut(i).assign(&Array1::from(row));
        point_ll.push(z);
    }
    Ok((resp, point_ll))
}

pub fn fit_gmm<T: Real>(x: ArrayView2<T>, cfg: &GmmConfig) -> Result<GmmFit<T>, GmmError> {
    let (n, p) = x.dim();
    let k = cfg.k;
    if k == 0 || n < k {
        return Err(GmmError::InvalidInput(format!("need 1 <= K <= N, got K={k}, N={n}")));
    }
    if p == 0 {
        return Err(GmmError::InvalidInput("embedding dimension is zero".into()));
    }
    if !(cfg.reg_covar > 0.0) {
        return Err(GmmError::InvalidInput("reg_covar must be positive".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GmmError::InvalidInput("non-finite embedding".into()));
    }
    let reg = T::c(cfg.reg_covar);
    let nf = T::from_usize_lossy(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let data_mean = x.mean_axis(Axis(0)).expect("rows");
    let spread: T = (&x - &data_mean).mapv(|v| v * v).sum() / (nf * T::from_usize_lossy(p));
    let init_cov = Array2::<T>::eye(p) * (spread + reg);

    let mut means = kmeans_pp(x, k, &mut rng);
    let mut covariances = vec![init_cov.clone(); k];
    let mut weights = Array1::from_elem(k, T::one() / T::from_usize_lossy(k));
    let mut factors = covariances
        .iter()
        .map(|c| cholesky(c.view()))
        .collect::<Result<Vec<_>, _>>()?;

    let floor = T::c(10.0) * T::epsilon() * nf;
    let mut history = Vec::new();
    let mut restarts = 0usize;
    let mut converged = false;
    let mut iterations = 0;
    let (mut resp, mut point_ll) = e_step(x, &means, &factors, &weights)?;
    history.push(point_ll.iter().copied().sum::<T>());

    while iterations < cfg.max_iter {
        iterations += 1;

        // M-step, fixed-order reductions.
        let mass = resp.sum_axis(Axis(0));
        let mut restarted = false;
        for c in 0..k {
            if mass[c] < floor {
                restarts += 1;
                if restarts > cfg.max_iter.max(1) {
                    return Err(GmmError::DegenerateComponent { component: c, restarts });
                }
                let worst = point_ll
                    .iter()
                    .enumerate()
                    .fold(0, |best, (i, &v)| if v < point_ll[best] { i } else { best });
                log::warn!("GMM component {c} collapsed; restarting at point {worst}");
                means.row_mut(c).assign(&x.row(worst));
                covariances[c] = init_cov.clone();
                weights[c] = T::one() / T::from_usize_lossy(k);
                restarted = true;
                continue;
            }
            weights[c] = mass[c] / nf;
            let mut mu = Array1::<T>::zeros(p);
            for i in 0..n {
                mu.scaled_add(resp[[i, c]], &x.row(i));
            }
            mu.mapv_inplace(|v| v / mass[c]);
            let mut cov = Array2::<T>::zeros((p, p));
            for i in 0..n {
                let d = &x.row(i) - &mu;
                let r = resp[[i, c]];
                for a in 0..p {
                    let ra = r * d[a];
                    for b in 0..=a {
                        cov[[a, b]] = cov[[a, b]] + ra * d[b];
                    }
                }
            }
            for a in 0..p {
                for b in 0..a {
                    cov[[b, a]] = cov[[a, b]];
                }
            }
            cov.mapv_inplace(|v| v / mass[c]);
            for a in 0..p {
                cov[[a, a]] = cov[[a, a]] + reg;
            }
            means.row_mut(c).assign(&mu);
            covariances[c] = cov;
        }
        if restarted {
            let s = weights.sum();
            weights.mapv_inplace(|w| w / s);
        }
        factors = covariances
            .iter()
            .map(|c| cholesky(c.view()))
            .collect::<Result<Vec<_>, _>>()?;

        let (r, pl) = e_step(x, &means, &factors, &weights)?;
        resp = r;
        point_ll = pl;
        let ll: T = point_ll.iter().copied().sum();
        let prev = *history.last().expect("history");
        history.push(ll);
        let rel = ((ll - prev) / prev.abs().max(T::min_positive_value())).abs();
        if !restarted && rel < T::c(cfg.tol) {
            converged = true;
            break;
        }
    }

    Ok(GmmFit {
        means,
        covariances,
        factors,
        weights,
        final_loglik: *history.last().expect("history"),
        loglik_history: history,
        responsibilities: resp,
        iterations,
        converged,
        restarts,
    })
}

/// Seeds topic Gaussians from the fitted components with full-rank `A_k`.
pub fn to_topic_params<T: Real>(fit: &GmmFit<T>) -> Result<TopicParams<T>, TopicError> {
    to_topic_params_with_rank(fit, fit.dim())
}

pub fn to_topic_params_with_rank<T: Real>(fit: &GmmFit<T>, rank: usize) -> Result<TopicParams<T>, TopicError> {
    TopicParams::from_gaussians(fit.means.view(), &fit.covariances, rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(seed: u64, centers: &[[f64; 2]], per: usize, sigma: f64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((centers.len() * per, 2));
        let mut labels = Vec::new();
        for (c, ctr) in centers.iter().enumerate() {
            for i in 0..per {
                let row = c * per + i;
                for j in 0..2 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x[[row, j]] = ctr[j] + sigma * z;
                }
                labels.push(c);
            }
        }
        (x, labels)
    }

    #[test]
    fn single_component_is_closed_form() {
        let (x, _) = blobs(1, &[[1.0, -2.0]], 200, 1.3);
        let fit = fit_gmm(x.view(), &GmmConfig::new(1, 0)).unwrap();
        let n = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).unwrap();
        let c = &x - &mean;
        let cov = c.t().dot(&c) / n + Array2::<f64>::eye(2) * 1e-6;
        for j in 0..2 {
            assert_abs_diff_eq!(fit.means[[0, j]], mean[j], epsilon = 1e-8);
        }
        for (a, b) in fit.covariances[0].iter().zip(cov.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(fit.weights[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn saturated_fit_has_no_nan() {
        let x: Array2<f64> = ndarray::array![[0.0, 0.0], [3.0, 1.0], [-2.0, 5.0]];
        let fit = fit_gmm(x.view(), &GmmConfig::new(3, 4)).unwrap();
        assert!(fit.final_loglik.is_finite());
        for i in 0..3 {
            let hit = (0..3).any(|c| (0..2).all(|j| (fit.means[[c, j]] - x[[i, j]]).abs() < 1e-6));
            assert!(hit, "point {i} not matched by a mean");
        }
        for c in &fit.covariances {
            assert!(c[[0, 0]] < 1e-5);
        }
    }

    #[test]
    fn seeded_fit_is_bitwise_deterministic() {
        let (x, _) = blobs(2, &[[0.0, 0.0], [4.0, 4.0]], 60, 1.0);
        let a = fit_gmm(x.view(), &GmmConfig::new(2, 9)).unwrap();
        let b = fit_gmm(x.view(), &GmmConfig::new(2, 9)).unwrap();
        assert_eq!(a.means, b.means);
        assert_eq!(a.loglik_history, b.loglik_history);
        assert_eq!(a.responsibilities, b.responsibilities);
    }

    #[test]
    fn invariants_of_the_fit() {
        let (x, _) = blobs(3, &[[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]], 50, 0.8);
        let fit = fit_gmm(x.view(), &GmmConfig::new(3, 1)).unwrap();
        assert_abs_diff_eq!(fit.weights.sum(), 1.0, epsilon = 1e-10);
        for row in fit.responsibilities.rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-10);
        }
        for w in fit.loglik_history.windows(2) {
            assert!(w[1] - w[0] >= -1e-9);
        }
    }

    #[test]
    fn rejects_invalid_input() {
        let x = Array2::<f64>::zeros((2, 2));
        assert!(matches!(fit_gmm(x.view(), &GmmConfig::new(3, 0)), Err(GmmError::InvalidInput(_))));
        let mut cfg = GmmConfig::new(1, 0);
        cfg.reg_covar = 0.0;
        assert!(matches!(fit_gmm(x.view(), &cfg), Err(GmmError::InvalidInput(_))));
    }
}
