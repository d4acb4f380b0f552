//! Reparametrized sampling, the log-space reconstruction term, and the
//! closed-form KL divergence between diagonal Gaussians.

use ndarray::{Array1, ArrayView1, ArrayView2, ArrayViewMut2};

use super::PriorSpec;
use crate::numkernel::{lse, lss, softmax};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaSample<T> {
    pub theta_hat: Array1<T>,
    pub theta: Array1<T>,
    pub epsilon: Array1<T>,
}

/// θ̂ = μ_q + exp(½ log σ²_q) ⊙ ε, θ = softmax(θ̂).
pub fn sample_theta<T: Real>(mu_q: ArrayView1<T>, log_var_q: ArrayView1<T>, epsilon: ArrayView1<T>) -> ThetaSample<T> {
    let half = T::c(0.5);
    let theta_hat = ndarray::Zip::from(&mu_q)
        .and(&log_var_q)
        .and(&epsilon)
        .map_collect(|&m, &lv, &e| m + (lv * half).exp() * e);
    let theta = Array1::from(softmax(theta_hat.as_slice().expect("contiguous")));
    ThetaSample {
        theta_hat,
        theta,
        epsilon: epsilon.to_owned(),
    }
}

/// Σ_v u_v · LSE_k(log β_{k,v} + LSS(θ̂)_k) over the nonzero entries of a
/// sparse count vector.
pub fn reconstruction_loglik_sparse<T: Real>(log_beta: ArrayView2<T>, theta_hat: &[T], bow: &[(usize, T)]) -> T {
    let log_theta = lss(theta_hat);
    let k = log_theta.len();
    let mut buf = vec![T::zero(); k];
    let mut total = T::zero();
    for &(v, u) in bow {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = log_beta[[j, v]] + log_theta[j];
        }
        total = total + u * lse(&buf);
    }
    total
}

/// Dense-count form of [`reconstruction_loglik_sparse`].
pub fn reconstruction_loglik<T: Real>(log_beta: ArrayView2<T>, theta_hat: &[T], bow: &[T]) -> T {
    let sparse: Vec<(usize, T)> = bow
        .iter()
        .enumerate()
        .filter(|(_, &u)| u != T::zero())
        .map(|(v, &u)| (v, u))
        .collect();
    reconstruction_loglik_sparse(log_beta, theta_hat, &sparse)
}

/// Value and gradient with respect to θ̂. `scale · u_v · r_{k,v}` is added to
/// `d_log_beta`, where r is the per-word topic posterior.
pub fn reconstruction_with_grad<T: Real>(
    log_beta: ArrayView2<T>,
    theta_hat: &[T],
    bow: &[(usize, T)],
    scale: T,
    mut d_log_beta: ArrayViewMut2<T>,
) -> (T, Vec<T>) {
    let log_theta = lss(theta_hat);
    let theta: Vec<T> = log_theta.iter().map(|v| v.exp()).collect();
    let k = log_theta.len();
    let mut buf = vec![T::zero(); k];
    let mut c = vec![T::zero(); k];
    let mut total = T::zero();
    let mut length = T::zero();
    for &(v, u) in bow {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = log_beta[[j, v]] + log_theta[j];
        }
        let z = lse(&buf);
        total = total + u * z;
        length = length + u;
        for j in 0..k {
            let r = (buf[j] - z).exp();
            c[j] = c[j] + u * r;
            d_log_beta[[j, v]] = d_log_beta[[j, v]] + scale * u * r;
        }
    }
    let grad = (0..k).map(|j| c[j] - theta[j] * length).collect();
    (total, grad)
}

/// KL(q ‖ p) for diagonal q = N(μ_q, diag exp(log σ²_q)) and the prior.
pub fn kl_divergence<T: Real>(mu_q: ArrayView1<T>, log_var_q: ArrayView1<T>, prior: &PriorSpec<T>) -> T {
    let half = T::c(0.5);
    let mut total = T::zero();
    for k in 0..mu_q.len() {
        let s = prior.sigma_p_diag[k];
        let d = prior.mu_p[k] - mu_q[k];
        total = total + (log_var_q[k].exp() / s + d * d / s + s.ln() - log_var_q[k] - T::one());
    }
    (total * half).max(T::zero())
}

/// Gradients of the KL term with respect to (μ_q, log σ²_q).
pub fn kl_grads<T: Real>(mu_q: ArrayView1<T>, log_var_q: ArrayView1<T>, prior: &PriorSpec<T>) -> (Vec<T>, Vec<T>) {
    let half = T::c(0.5);
    (0..mu_q.len())
        .map(|k| {
            let s = prior.sigma_p_diag[k];
            ((mu_q[k] - prior.mu_p[k]) / s, half * (log_var_q[k].exp() / s - T::one()))
        })
        .unzip()
}
