use ndarray::Array1;

use crate::scalar::Real;

/// Symmetric logistic-normal prior: μ_p = 0 and s_k = (1/α)(1 − 1/K), the
/// Laplace approximation of a symmetric Dirichlet(α).
#[derive(Clone, Debug, PartialEq)]
pub struct PriorSpec<T> {
    pub mu_p: Array1<T>,
    pub sigma_p_diag: Array1<T>,
    pub alpha: T,
}

impl<T: Real> PriorSpec<T> {
    pub const DEFAULT_ALPHA: f64 = 0.2;

    pub fn symmetric(k: usize, alpha: T) -> Self {
        assert!(k >= 1 && alpha > T::zero(), "prior needs K >= 1 and alpha > 0");
        let kf = T::from_usize_lossy(k);
        let s = (T::one() / alpha) * (T::one() - T::one() / kf);
        // K = 1 degenerates to a point mass; keep the variance strictly positive.
        let s = if s > T::zero() { s } else { T::one() / alpha };
        Self {
            mu_p: Array1::zeros(k),
            sigma_p_diag: Array1::from_elem(k, s),
            alpha,
        }
    }

    pub fn num_topics(&self) -> usize {
        self.mu_p.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_variance() {
        let p = PriorSpec::<f64>::symmetric(5, 0.2);
        // (1/0.2)(1 - 1/5) = 4
        assert!(p.sigma_p_diag.iter().all(|&s| (s - 4.0).abs() < 1e-15));
        assert!(p.mu_p.iter().all(|&m| m == 0.0));
    }
}
