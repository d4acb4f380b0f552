use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{symmetric_eigen, NumError};
use crate::scalar::Real;

/// Eigenvalues below this fraction of the largest one count as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Pca<T> {
    /// N×P projected scores.
    pub projected: Array2<T>,
    /// Q×P principal axes as columns.
    pub components: Array2<T>,
    pub mean: Array1<T>,
    /// Variance along each retained axis, descending.
    pub explained_variance: Array1<T>,
    pub total_variance: T,
}

/// Projects mean-centered rows onto the top `target_dim` principal axes of
/// the sample covariance. Each axis is signed so that its largest-magnitude
/// loading is positive.
pub fn pca_reduce<T: Real>(data: ArrayView2<T>, target_dim: usize) -> Result<Pca<T>, NumError> {
    let (n, q) = data.dim();
    if target_dim == 0 || target_dim > q || target_dim > n {
        return Err(NumError::InvalidTarget {
            target: target_dim,
            rows: n,
            cols: q,
        });
    }
    let mean = data.mean_axis(Axis(0)).expect("non-empty rows");
    let centered = &data - &mean;
    let cov = centered.t().dot(&centered) / T::from_usize_lossy(n);
    let eig = symmetric_eigen(cov.view())?;

    let top = eig.values[0].max(T::zero());
    let rank = eig
        .values
        .iter()
        .filter(|&&v| top > T::zero() && v > top * T::c(RANK_TOL))
        .count();
    if rank < target_dim {
        return Err(NumError::RankDeficient {
            rank,
            needed: target_dim,
        });
    }

    let mut components = Array2::zeros((q, target_dim));
    for k in 0..target_dim {
        let mut col = eig.vectors.column(k).to_owned();
        let mut best = 0;
        for i in 1..q {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < T::zero() {
            col.mapv_inplace(|v| -v);
        }
        components.column_mut(k).assign(&col);
    }
    let projected = centered.dot(&components);
    let explained_variance = eig.values.slice(ndarray::s![..target_dim]).to_owned();
    let total_variance = eig.values.iter().map(|&v| v.max(T::zero())).sum();
    Ok(Pca {
        projected,
        components,
        mean,
        explained_variance,
        total_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn line_in_3d_is_one_component() {
        let dir = [1.0, -2.0, 0.5];
        let data = Array2::from_shape_fn((40, 3), |(i, j)| 3.0 + dir[j] * (i as f64 * 0.1 - 1.0));
        let pca = pca_reduce(data.view(), 1).unwrap();
        let ratio = pca.explained_variance[0] / pca.total_variance;
        assert!(ratio > 0.9999, "ratio {ratio}");
        assert!(matches!(
            pca_reduce(data.view(), 2),
            Err(NumError::RankDeficient { rank: 1, needed: 2 })
        ));
    }

    #[test]
    fn full_rank_projection_is_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Array2<f64> = Array2::from_shape_fn((12, 4), |_| rng.random_range(-1.0..1.0));
        let pca = pca_reduce(data.view(), 4).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let d0 = (&data.row(i) - &data.row(j)).mapv(|v| v * v).sum().sqrt();
                let d1 = (&pca.projected.row(i) - &pca.projected.row(j))
                    .mapv(|v| v * v)
                    .sum()
                    .sqrt();
                assert_abs_diff_eq!(d0, d1, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn explained_variance_matches_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = Array2::from_shape_fn((50, 10), |(_, j)| rng.random_range(-1.0..1.0) * (1.0 + j as f64));
        let pca = pca_reduce(data.view(), 3).unwrap();

        let m = nalgebra::DMatrix::from_fn(50, 10, |i, j| data[[i, j]]);
        let mean = m.row_mean();
        let c = nalgebra::DMatrix::from_fn(50, 10, |i, j| m[(i, j)] - mean[j]);
        let cov = c.transpose() * &c / 50.0;
        let mut ev: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for k in 0..3 {
            assert_abs_diff_eq!(pca.explained_variance[k], ev[k], epsilon = 1e-8);
            let col = pca.projected.column(k);
            let var = col.dot(&col) / 50.0;
            assert_abs_diff_eq!(var, ev[k], epsilon = 1e-8);
        }
        for k in 0..3 {
            let col = pca.components.column(k);
            let best = col
                .iter()
                .copied()
                .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(best > 0.0);
        }
    }

    #[test]
    fn rejects_bad_target() {
        let data = Array2::<f64>::zeros((3, 2));
        assert!(matches!(pca_reduce(data.view(), 3), Err(NumError::InvalidTarget { .. })));
        assert!(matches!(pca_reduce(data.view(), 1), Err(NumError::RankDeficient { rank: 0, .. })));
    }
}
