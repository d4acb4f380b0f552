//! Topic Gaussians Σ_k = A_k A_kᵀ + diag(exp D_k) and the log-β table.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use thiserror::Error;

use crate::numkernel::{cholesky, gaussian_logpdf, symmetric_eigen, NumError, SpdMatrix};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopicError {
    #[error("covariance of topic {topic} is not positive definite")]
    NotPositiveDefinite { topic: usize },
    #[error("topic shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Initial fraction of each covariance diagonal assigned to `exp(D_k)`.
const SPLIT_FRACTION: f64 = 0.01;
const SPLIT_SHRINK: f64 = 0.1;
const SPLIT_ATTEMPTS: usize = 30;

/// Topic parameters Φ. `a` is K×P×r, `mu` and `d` are K×P.
#[derive(Clone, Debug, PartialEq)]
pub struct TopicParams<T> {
    pub mu: Array2<T>,
    pub a: Array3<T>,
    pub d: Array2<T>,
}

impl<T: Real> TopicParams<T> {
    pub fn new(mu: Array2<T>, a: Array3<T>, d: Array2<T>) -> Result<Self, TopicError> {
        let (k, p) = mu.dim();
        let (ka, pa, r) = a.dim();
        if ka != k || pa != p || d.dim() != (k, p) {
            return Err(TopicError::Shape(format!(
                "mu {:?}, A {:?}, D {:?}",
                mu.dim(),
                a.dim(),
                d.dim()
            )));
        }
        if r == 0 || r > p {
            return Err(TopicError::Shape(format!("rank {r} must be in 1..={p}")));
        }
        Ok(Self { mu, a, d })
    }

    /// Spherical topics `exp(log_var) · I` with zero `A`.
    pub fn isotropic(mu: Array2<T>, log_var: T, rank: usize) -> Result<Self, TopicError> {
        let (k, p) = mu.dim();
        Self::new(mu, Array3::zeros((k, p, rank)), Array2::from_elem((k, p), log_var))
    }

    /// Factors full covariances into `(A_k, D_k)`.
    ///
    /// Diagonal inputs map to `A_k = 0, D_k = log diag`. Otherwise
    /// `exp(D_k) = 0.01 · diag(Σ_k)` and `A_k` factors the remainder; the
    /// fraction shrinks tenfold until the remainder is positive definite.
    /// With `rank < P`, `A_k` keeps the top eigenpairs of the remainder.
    pub fn from_gaussians(means: ArrayView2<T>, covariances: &[Array2<T>], rank: usize) -> Result<Self, TopicError> {
        let (k, p) = means.dim();
        if covariances.len() != k {
            return Err(TopicError::Shape(format!("{} covariances for {k} means", covariances.len())));
        }
        if rank == 0 || rank > p {
            return Err(TopicError::Shape(format!("rank {rank} must be in 1..={p}")));
        }
        let mut a = Array3::zeros((k, p, rank));
        let mut d = Array2::zeros((k, p));
        for (topic, sigma) in covariances.iter().enumerate() {
            if sigma.dim() != (p, p) {
                return Err(TopicError::Shape(format!("covariance {topic} is {:?}", sigma.dim())));
            }
            let diag = sigma.diag();
            if diag.iter().any(|&v| !(v > T::zero())) {
                return Err(TopicError::NotPositiveDefinite { topic });
            }
            let is_diagonal = (0..p).all(|i| (0..p).all(|j| i == j || sigma[[i, j]] == T::zero()));
            if is_diagonal {
                d.row_mut(topic).assign(&diag.mapv(|v| v.ln()));
                continue;
            }
            cholesky(sigma.view()).map_err(|_| TopicError::NotPositiveDefinite { topic })?;
            let mut frac = T::c(SPLIT_FRACTION);
            let mut done = false;
            for _ in 0..SPLIT_ATTEMPTS {
                let floor = diag.mapv(|v| v * frac);
                let dk = floor.mapv(|v| v.ln());
                let mut rest = sigma.clone();
                for i in 0..p {
                    rest[[i, i]] = rest[[i, i]] - dk[i].exp();
                }
                if let Ok(l) = cholesky(rest.view()) {
                    if rank == p {
                        a.slice_mut(s![topic, .., ..]).assign(l.lower());
                    } else {
                        let eig = symmetric_eigen(rest.view())?;
                        for c in 0..rank {
                            let scale = eig.values[c].max(T::zero()).sqrt();
                            for i in 0..p {
                                a[[topic, i, c]] = eig.vectors[[i, c]] * scale;
                            }
                        }
                    }
                    d.row_mut(topic).assign(&dk);
                    done = true;
                    break;
                }
                frac = frac * T::c(SPLIT_SHRINK);
            }
            if !done {
                return Err(TopicError::NotPositiveDefinite { topic });
            }
        }
        Self::new(means.to_owned(), a, d)
    }

    pub fn num_topics(&self) -> usize {
        self.mu.nrows()
    }

    pub fn dim(&self) -> usize {
        self.mu.ncols()
    }

    pub fn rank(&self) -> usize {
        self.a.dim().2
    }

    pub fn covariance(&self, k: usize) -> Array2<T> {
        let a = self.a.index_axis(Axis(0), k);
        let mut sigma = a.dot(&a.t());
        for i in 0..self.dim() {
            sigma[[i, i]] = sigma[[i, i]] + self.d[[k, i]].exp();
        }
        sigma
    }

    pub fn factor(&self, k: usize) -> Result<SpdMatrix<T>, TopicError> {
        cholesky(self.covariance(k).view()).map_err(|_| TopicError::NotPositiveDefinite { topic: k })
    }
}

/// K×N table of log φ(ω_n; μ_k, Σ_k), with the Cholesky factors used to build it.
#[derive(Clone, Debug)]
pub struct LogBeta<T> {
    pub values: Array2<T>,
    pub factors: Vec<SpdMatrix<T>>,
}

impl<T: Real> LogBeta<T> {
    pub fn num_topics(&self) -> usize {
        self.values.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.values.ncols()
    }
}

pub fn log_beta<T: Real>(phi: &TopicParams<T>, embeddings: ArrayView2<T>) -> Result<LogBeta<T>, TopicError> {
    if embeddings.ncols() != phi.dim() {
        return Err(TopicError::Shape(format!(
            "embeddings have {} columns, topics live in {} dims",
            embeddings.ncols(),
            phi.dim()
        )));
    }
    let k = phi.num_topics();
    let rows: Vec<Result<(SpdMatrix<T>, Array1<T>), TopicError>> = (0..k)
        .into_par_iter()
        .map(|topic| {
            let f = phi.factor(topic)?;
            let mu = phi.mu.row(topic);
            let row = embeddings
                .rows()
                .into_iter()
                .map(|w| gaussian_logpdf(w, mu, &f))
                .collect::<Result<Array1<T>, _>>()?;
            Ok((f, row))
        })
        .collect();
    let mut values = Array2::zeros((k, embeddings.nrows()));
    let mut factors = Vec::with_capacity(k);
    for (topic, r) in rows.into_iter().enumerate() {
        let (f, row) = r?;
        values.row_mut(topic).assign(&row);
        factors.push(f);
    }
    Ok(LogBeta { values, factors })
}

#[derive(Clone, Debug)]
pub struct TopicGrads<T> {
    pub mu: Array2<T>,
    pub a: Array3<T>,
    pub d: Array2<T>,
}

/// Chains ∂f/∂log β (K×N) back to (μ_k, A_k, D_k).
///
/// With z = ω − μ and w = Σ⁻¹z: ∂ log φ/∂μ = w and
/// ∂ log φ/∂Σ = ½(w wᵀ − Σ⁻¹); then ∂/∂A = 2 S A, ∂/∂D_i = S_ii exp(D_i).
pub fn topic_grads<T: Real>(
    phi: &TopicParams<T>,
    lb: &LogBeta<T>,
    embeddings: ArrayView2<T>,
    upstream: ArrayView2<T>,
) -> TopicGrads<T> {
    let (k, p) = phi.mu.dim();
    let r = phi.rank();
    let per_topic: Vec<(Array1<T>, Array2<T>, Array1<T>)> = (0..k)
        .into_par_iter()
        .map(|topic| {
            let f = &lb.factors[topic];
            let mu = phi.mu.row(topic);
            let mut dmu = Array1::<T>::zeros(p);
            let mut outer = Array2::<T>::zeros((p, p));
            let mut total = T::zero();
            for (v, w) in embeddings.rows().into_iter().enumerate() {
                let g = upstream[[topic, v]];
                if g == T::zero() {
                    continue;
                }
                let z: Array1<T> = &w - &mu;
                let wv = f.solve(z.view());
                dmu.scaled_add(g, &wv);
                total = total + g;
                for i in 0..p {
                    let gi = g * wv[i];
                    for j in 0..p {
                        outer[[i, j]] = outer[[i, j]] + gi * wv[j];
                    }
                }
            }
            let inv = f.inverse();
            let s_mat = (outer - inv * total) * T::c(0.5);
            let a = phi.a.index_axis(Axis(0), topic);
            let da = s_mat.dot(&a) * T::c(2.0);
            let dd = Array1::from_shape_fn(p, |i| s_mat[[i, i]] * phi.d[[topic, i]].exp());
            (dmu, da, dd)
        })
        .collect();
    let mut g = TopicGrads {
        mu: Array2::zeros((k, p)),
        a: Array3::zeros((k, p, r)),
        d: Array2::zeros((k, p)),
    };
    for (topic, (dmu, da, dd)) in per_topic.into_iter().enumerate() {
        g.mu.row_mut(topic).assign(&dmu);
        g.a.index_axis_mut(Axis(0), topic).assign(&da);
        g.d.row_mut(topic).assign(&dd);
    }
    g
}

/// The `t` words with the largest log β in topic `k`, ties by ascending index.
pub fn top_words<T: Real>(lb: ArrayView2<T>, k: usize, t: usize) -> Vec<(usize, T)> {
    let row: ArrayView1<T> = lb.row(k);
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&i, &j| {
        row[j]
            .partial_cmp(&row[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    idx.into_iter().take(t).map(|i| (i, row[i])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frob_rel(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let num = (a - b).mapv(|v| v * v).sum().sqrt();
        num / b.mapv(|v| v * v).sum().sqrt()
    }

    #[test]
    fn diagonal_covariance_splits_into_d_only() {
        let means = array![[0.0, 1.0, 2.0]];
        let cov = Array2::from_diag(&array![0.5, 2.0, 3.0]);
        let t = TopicParams::from_gaussians(means.view(), &[cov], 3).unwrap();
        assert!(t.a.iter().all(|&v| v == 0.0));
        assert_abs_diff_eq!(t.d[[0, 0]], 0.5f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(t.d[[0, 2]], 3.0f64.ln(), epsilon = 1e-15);

        let id = TopicParams::from_gaussians(means.view(), &[Array2::eye(3)], 3).unwrap();
        assert!(id.a.iter().all(|&v| v == 0.0));
        assert!(id.d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_covariance_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let m = Array2::from_shape_fn((4, 4), |_| rng.random_range(-1.0..1.0));
            let cov = m.dot(&m.t()) + Array2::<f64>::eye(4) * 1e-3;
            let t = TopicParams::from_gaussians(Array2::zeros((1, 4)).view(), &[cov.clone()], 4).unwrap();
            assert!(frob_rel(&t.covariance(0), &cov) < 1e-6);
        }
    }

    #[test]
    fn nearly_singular_covariance_shrinks_split() {
        // Strong correlation leaves no room for a 1% diagonal floor.
        let cov = array![[1.0, 0.99999], [0.99999, 1.0]];
        let t = TopicParams::from_gaussians(Array2::zeros((1, 2)).view(), &[cov.clone()], 2).unwrap();
        assert!(t.d[[0, 0]] < 0.01f64.ln());
        assert!(frob_rel(&t.covariance(0), &cov) < 1e-6);
    }

    #[test]
    fn log_beta_matches_density_at_mean() {
        let mu = array![[0.0, 0.0], [1.0, -1.0]];
        let t = TopicParams::isotropic(mu, 0.0, 2).unwrap();
        let emb = array![[0.0, 0.0], [1.0, -1.0], [4.0, 4.0]];
        let lb = log_beta(&t, emb.view()).unwrap();
        let at_mean = -(std::f64::consts::TAU).ln();
        assert_abs_diff_eq!(lb.values[[0, 0]], at_mean, epsilon = 1e-14);
        assert_abs_diff_eq!(lb.values[[1, 1]], at_mean, epsilon = 1e-14);
    }

    #[test]
    fn equal_topics_give_equal_rows() {
        let t = TopicParams::isotropic(array![[0.5, 0.5], [0.5, 0.5]], -0.3, 1).unwrap();
        let emb = array![[0.0, 1.0], [2.0, 3.0], [0.1, -0.2]];
        let lb = log_beta(&t, emb.view()).unwrap();
        assert_eq!(lb.values.row(0), lb.values.row(1));
    }

    #[test]
    fn log_beta_matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (k, n, p) = (2, 3, 2);
        let mu: Array2<f64> = Array2::from_shape_fn((k, p), |_| rng.random_range(-1.0..1.0));
        let a: Array3<f64> = Array3::from_shape_fn((k, p, p), |_| rng.random_range(-1.0..1.0));
        let d: Array2<f64> = Array2::from_shape_fn((k, p), |_| rng.random_range(-1.0..0.5));
        let t = TopicParams::new(mu.clone(), a.clone(), d.clone()).unwrap();
        let emb = Array2::from_shape_fn((n, p), |_| rng.random_range(-2.0..2.0));
        let lb = log_beta(&t, emb.view()).unwrap();
        for topic in 0..k {
            let am = nalgebra::DMatrix::from_fn(p, p, |i, j| a[[topic, i, j]]);
            let sigma = &am * am.transpose() + nalgebra::DMatrix::from_fn(p, p, |i, j| if i == j { d[[topic, i]].exp() } else { 0.0 });
            let inv = sigma.clone().try_inverse().unwrap();
            for v in 0..n {
                let z = nalgebra::DVector::from_fn(p, |i, _| emb[[v, i]] - mu[[topic, i]]);
                let q = (z.transpose() * &inv * &z)[(0, 0)];
                let want = -(p as f64) / 2.0 * std::f64::consts::TAU.ln() - 0.5 * sigma.determinant().ln() - 0.5 * q;
                assert_abs_diff_eq!(lb.values[[topic, v]], want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn top_words_ranking_and_ties() {
        let lb = array![[0.5, 2.0, 2.0, -1.0]];
        let top = top_words(lb.view(), 0, 4);
        let idx: Vec<usize> = top.iter().map(|&(i, _)| i).collect();
        assert_eq!(idx, vec![1, 2, 0, 3]);
        assert_eq!(top_words(lb.view(), 0, 2).len(), 2);
    }

    #[test]
    fn nearest_word_ranks_first() {
        let emb = array![[3.0, 0.0], [0.2, 0.1], [-1.0, -1.0], [1.0, 1.0]];
        let t = TopicParams::isotropic(array![[0.2, 0.1]], 0.0, 2).unwrap();
        let lb = log_beta(&t, emb.view()).unwrap();
        assert_eq!(top_words(lb.values.view(), 0, 1)[0].0, 1);
    }

    proptest! {
        #[test]
        fn reparametrized_covariance_is_spd(
            a in prop::collection::vec(-5.0f64..5.0, 9),
            d in prop::collection::vec(-8.0f64..5.0, 3),
        ) {
            let t = TopicParams::new(
                Array2::zeros((1, 3)),
                Array3::from_shape_vec((1, 3, 3), a).unwrap(),
                Array2::from_shape_vec((1, 3), d).unwrap(),
            ).unwrap();
            prop_assert!(t.factor(0).is_ok());
        }

        #[test]
        fn spherical_log_beta_peaks_at_nearest_word(
            pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..12),
            mx in -5.0f64..5.0, my in -5.0f64..5.0, lv in -2.0f64..2.0,
        ) {
            let emb = Array2::from_shape_fn((pts.len(), 2), |(i, j)| if j == 0 { pts[i].0 } else { pts[i].1 });
            let t = TopicParams::isotropic(array![[mx, my]], lv, 2).unwrap();
            let lb = log_beta(&t, emb.view()).unwrap();
            let nearest = (0..pts.len()).min_by(|&i, &j| {
                let di = (pts[i].0 - mx).powi(2) + (pts[i].1 - my).powi(2);
                let dj = (pts[j].0 - mx).powi(2) + (pts[j].1 - my).powi(2);
                di.partial_cmp(&dj).unwrap()
            }).unwrap();
            let best = top_words(lb.values.view(), 0, 1)[0].0;
            let dn = (pts[nearest].0 - mx).powi(2) + (pts[nearest].1 - my).powi(2);
            let db = (pts[best].0 - mx).powi(2) + (pts[best].1 - my).powi(2);
            prop_assert!((dn - db).abs() < 1e-9);
        }
    }
}
