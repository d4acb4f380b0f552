use crate::scalar::Real;

/// log Σ exp(x_i) with the running-max shift. `-inf` for an empty slice.
pub fn lse<T: Real>(x: &[T]) -> T {
    let m = x.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    let s: T = x.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}

/// Log-softmax: x_i − lse(x).
pub fn lss<T: Real>(x: &[T]) -> Vec<T> {
    let z = lse(x);
    x.iter().map(|&v| v - z).collect()
}

pub fn softmax<T: Real>(x: &[T]) -> Vec<T> {
    let m = x.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = x.iter().map(|&v| (v - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn symmetric_pair() {
        let ln2 = 2f64.ln();
        assert_abs_diff_eq!(lse(&[0.0, 0.0]), ln2, epsilon = 1e-15);
        assert_abs_diff_eq!(lse(&[0.0, 0.0]), 0.693147, epsilon = 1e-6);
        for v in lss(&[0.0f64, 0.0]) {
            assert_abs_diff_eq!(v, -ln2, epsilon = 1e-15);
        }
    }

    #[test]
    fn no_overflow_or_underflow() {
        assert_abs_diff_eq!(lse(&[1000.0f64, 1000.0]), 1000.0 + 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(lse(&[-2000.0f64, 0.0]), 0.0, epsilon = 1e-12);
        let s = softmax(&[-2000.0f64, 0.0]);
        assert_eq!(s[1], 1.0);
    }

    #[test]
    fn empty_is_neg_infinity() {
        assert_eq!(lse::<f64>(&[]), f64::NEG_INFINITY);
    }

    proptest! {
        #[test]
        fn shift_invariance(x in prop::collection::vec(-50.0f64..50.0, 1..12), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            prop_assert!((lse(&shifted) - (lse(&x) + c)).abs() < 1e-12);
            for (a, b) in lss(&shifted).iter().zip(lss(&x)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn lss_normalizes(x in prop::collection::vec(-300.0f64..300.0, 1..12)) {
            let total: f64 = lss(&x).iter().map(|v| v.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let sm: f64 = softmax(&x).iter().sum();
            prop_assert!((sm - 1.0).abs() < 1e-12);
        }
    }
}
