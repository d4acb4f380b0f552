use ndarray::ArrayView1;

use super::{NumError, SpdMatrix};
use crate::scalar::Real;

/// log N(x; μ, Σ) = −(P/2) log 2π − Σ_i log L_ii − ½‖L⁻¹(x−μ)‖².
pub fn gaussian_logpdf<T: Real>(
    x: ArrayView1<T>,
    mu: ArrayView1<T>,
    cov: &SpdMatrix<T>,
) -> Result<T, NumError> {
    let p = cov.dim();
    for len in [x.len(), mu.len()] {
        if len != p {
            return Err(NumError::DimensionMismatch { expected: p, got: len });
        }
    }
    let diff = &x - &mu;
    let z = cov.solve_lower(diff.view());
    let maha: T = z.iter().map(|&v| v * v).sum();
    let log_2pi = T::c(std::f64::consts::TAU.ln());
    Ok(-T::c(0.5) * T::from_usize_lossy(p) * log_2pi - cov.half_log_det() - T::c(0.5) * maha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::cholesky;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn density_at_mean_and_unit_shift() {
        let id = cholesky(Array2::<f64>::eye(2).view()).unwrap();
        let mu = array![0.3, -1.0];
        let at_mean = gaussian_logpdf(mu.view(), mu.view(), &id).unwrap();
        assert_abs_diff_eq!(at_mean, -(std::f64::consts::TAU).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(at_mean, -1.837877, epsilon = 1e-6);
        let x = array![1.3, -1.0];
        let shifted = gaussian_logpdf(x.view(), mu.view(), &id).unwrap();
        assert_abs_diff_eq!(shifted, at_mean - 0.5, epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let id = cholesky(Array2::<f64>::eye(2).view()).unwrap();
        let x = array![1.0, 2.0, 3.0];
        let mu = array![0.0, 0.0];
        assert_eq!(
            gaussian_logpdf(x.view(), mu.view(), &id),
            Err(NumError::DimensionMismatch { expected: 2, got: 3 })
        );
    }

    /// Oracle: explicit inverse and determinant from nalgebra.
    fn dense_oracle(x: &[f64], mu: &[f64], cov: &Array2<f64>) -> f64 {
        let p = x.len();
        let s = nalgebra::DMatrix::from_fn(p, p, |i, j| cov[[i, j]]);
        let inv = s.clone().try_inverse().unwrap();
        let d = nalgebra::DVector::from_fn(p, |i, _| x[i] - mu[i]);
        let q = (d.transpose() * inv * &d)[(0, 0)];
        -0.5 * (p as f64) * std::f64::consts::TAU.ln() - 0.5 * s.determinant().ln() - 0.5 * q
    }

    #[test]
    fn random_case_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let p = 4;
            let a = Array2::from_shape_fn((p, p), |_| rng.random_range(-1.0..1.0));
            let cov = a.dot(&a.t()) + Array2::<f64>::eye(p) * 0.5;
            let x: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mu: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let l = cholesky(cov.view()).unwrap();
            let got = gaussian_logpdf(
                ndarray::ArrayView1::from(&x),
                ndarray::ArrayView1::from(&mu),
                &l,
            )
            .unwrap();
            assert_abs_diff_eq!(got, dense_oracle(&x, &mu, &cov), epsilon = 1e-10);
        }
    }

    #[test]
    fn density_integrates_to_one() {
        // 1-D: midpoint rule over ±10σ.
        let c1 = cholesky(array![[0.7f64]].view()).unwrap();
        let mu1 = array![0.2];
        let (lo, hi, n) = (-10.0, 10.0, 20_000);
        let h = (hi - lo) / n as f64;
        let total: f64 = (0..n)
            .map(|i| {
                let x = array![lo + (i as f64 + 0.5) * h];
                gaussian_logpdf(x.view(), mu1.view(), &c1).unwrap().exp() * h
            })
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-3);

        // 2-D with correlation.
        let c2 = cholesky(array![[1.0f64, 0.4], [0.4, 0.5]].view()).unwrap();
        let mu2 = array![0.0, 0.5];
        let (lo, hi, n) = (-8.0, 8.0, 400);
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = array![lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
                total += gaussian_logpdf(x.view(), mu2.view(), &c2).unwrap().exp() * h * h;
            }
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn works_in_single_precision() {
        let id = cholesky(Array2::<f32>::eye(2).view()).unwrap();
        let mu = array![0.0f32, 0.0];
        let v = gaussian_logpdf(mu.view(), mu.view(), &id).unwrap();
        assert!((v + 1.837877f32).abs() < 1e-5);
    }
}
