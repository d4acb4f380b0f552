use ndarray::{ArrayD, ArrayViewD, ArrayViewMutD, Zip};
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
        }
    }
}

/// First and second moments for a fixed list of tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    pub m: Vec<ArrayD<T>>,
    pub v: Vec<ArrayD<T>>,
    pub t: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: AdamConfig, shapes: &[&[usize]]) -> Self {
        Self {
            config,
            m: shapes.iter().map(|s| ArrayD::zeros(s.to_vec())).collect(),
            v: shapes.iter().map(|s| ArrayD::zeros(s.to_vec())).collect(),
            t: 0,
        }
    }

    pub fn for_params(config: AdamConfig, params: &[ArrayViewD<T>]) -> Self {
        let shapes: Vec<&[usize]> = params.iter().map(|p| p.shape()).collect();
        Self::new(config, &shapes)
    }
}

/// One bias-corrected Adam step that descends along `grads`.
pub fn adam_step<T: Real>(
    params: &mut [ArrayViewMutD<T>],
    grads: &[ArrayViewD<T>],
    state: &mut OptimizerState<T>,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} parameters, {} gradients, {} moment tensors",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(TrainError::ShapeMismatch(format!(
                "tensor {i}: parameter {:?}, gradient {:?}, moments {:?}",
                p.shape(),
                g.shape(),
                state.m[i].shape()
            )));
        }
    }
    state.t += 1;
    let cfg = state.config;
    let t = state.t as i32;
    let b1 = T::c(cfg.beta1);
    let b2 = T::c(cfg.beta2);
    let one = T::one();
    let bc1 = one - T::c(cfg.beta1.powi(t));
    let bc2 = one - T::c(cfg.beta2.powi(t));
    let lr = T::c(cfg.lr);
    let eps = T::c(cfg.eps);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        Zip::from(p)
            .and(g)
            .and(&mut state.m[i])
            .and(&mut state.v[i])
            .for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    Ok(())
}

pub fn global_norm<T: Real>(grads: &[ArrayViewD<T>]) -> T {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .fold(T::zero(), |acc, &v| acc + v * v)
        .sqrt()
}

/// Rescales every tensor by `max_norm / norm` when the global L2 norm exceeds
/// `max_norm`. Returns the norm before clipping.
pub fn clip_gradients<T: Real>(grads: &mut [ArrayViewMutD<T>], max_norm: T) -> T {
    assert!(max_norm > T::zero(), "max_norm must be positive");
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .fold(T::zero(), |acc, &v| acc + v * v)
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.mapv_inplace(|v| v * scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, ArrayD, IxDyn};
    use proptest::prelude::*;

    #[test]
    fn one_step_matches_hand_calculation() {
        let cfg = AdamConfig::new(1e-3, 0.99, 0.999);
        let mut p = arr1(&[0.5, -1.0, 2.0]).into_dyn();
        let g = arr1(&[0.2, -3.0, 0.0]).into_dyn();
        let mut st = OptimizerState::<f64>::new(cfg, &[&[3]]);
        let before = p.clone();
        adam_step(&mut [p.view_mut()], &[g.view()], &mut st).unwrap();
        for i in 0..3 {
            let m = (1.0 - 0.99) * g[i];
            let v = (1.0 - 0.999) * g[i] * g[i];
            let m_hat = m / (1.0 - 0.99);
            let v_hat = v / (1.0 - 0.999);
            let expect = before[i] - 1e-3 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((p[i] - expect).abs() < 1e-12);
        }
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let cfg = AdamConfig::new(1e-2, 0.9, 0.999);
        let mut p = ArrayD::from_shape_fn(IxDyn(&[2, 3]), |ix| ix[0] as f64 - ix[1] as f64);
        let before = p.clone();
        let g = ArrayD::<f64>::zeros(IxDyn(&[2, 3]));
        let mut st = OptimizerState::new(cfg, &[&[2, 3]]);
        for _ in 0..10 {
            adam_step(&mut [p.view_mut()], &[g.view()], &mut st).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let cfg = AdamConfig::new(1e-3, 0.9, 0.999);
        let mut p = arr1(&[0.0f64, 0.0]).into_dyn();
        let g = arr1(&[4.0, -0.5]).into_dyn();
        let mut st = OptimizerState::new(cfg, &[&[2]]);
        let mut prev = p.clone();
        for _ in 0..2000 {
            prev.assign(&p);
            adam_step(&mut [p.view_mut()], &[g.view()], &mut st).unwrap();
        }
        assert!(((prev[0] - p[0]) - 1e-3).abs() < 1e-9);
        assert!(((p[1] - prev[1]) - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        let cfg = AdamConfig::new(1e-3, 0.9, 0.999);
        let mut p = ArrayD::<f64>::zeros(IxDyn(&[2]));
        let g = ArrayD::<f64>::zeros(IxDyn(&[3]));
        let mut st = OptimizerState::new(cfg, &[&[2]]);
        assert!(matches!(
            adam_step(&mut [p.view_mut()], &[g.view()], &mut st),
            Err(TrainError::ShapeMismatch(_))
        ));
        assert_eq!(st.t, 0);
    }

    #[test]
    fn clipping_cases() {
        let mut a = arr1(&[0.6, 0.8]).into_dyn();
        clip_gradients(&mut [a.view_mut()], 5.0);
        assert_eq!(a, arr1(&[0.6, 0.8]).into_dyn());

        let mut a = arr1(&[6.0]).into_dyn();
        let mut b = arr1(&[8.0, 0.0]).into_dyn();
        let n = clip_gradients(&mut [a.view_mut(), b.view_mut()], 5.0);
        assert_eq!(n, 10.0);
        assert_eq!(a, arr1(&[3.0]).into_dyn());
        assert_eq!(b, arr1(&[4.0, 0.0]).into_dyn());

        let mut z = ArrayD::<f64>::zeros(IxDyn(&[3]));
        assert_eq!(clip_gradients(&mut [z.view_mut()], 5.0), 0.0);
        assert!(z.iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn clipping_never_increases_norm(v in proptest::collection::vec(-100.0f64..100.0, 1..40), max in 0.01f64..50.0) {
            let mut a = ArrayD::from_shape_vec(IxDyn(&[v.len()]), v).unwrap();
            let before = global_norm(&[a.view()]);
            clip_gradients(&mut [a.view_mut()], max);
            let after = global_norm(&[a.view()]);
            prop_assert!(after <= before * (1.0 + 1e-12));
            prop_assert!(after <= max * (1.0 + 1e-12));
        }
    }
}
