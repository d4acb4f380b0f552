use ndarray::ArrayView1;

use super::NumError;
use crate::scalar::Real;

/// a·b / (‖a‖‖b‖), clamped to [−1, 1].
pub fn cosine_similarity<T: Real>(a: ArrayView1<T>, b: ArrayView1<T>) -> Result<T, NumError> {
    if a.len() != b.len() {
        return Err(NumError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let aa = a.dot(&a);
    let bb = b.dot(&b);
    if aa == T::zero() || bb == T::zero() {
        return Err(NumError::ZeroVector);
    }
    // sqrt(a·a · a·a) rounds back to a·a, so identical inputs give exactly 1.
    let prod = aa * bb;
    let denom = if prod.is_finite() && prod > T::zero() {
        prod.sqrt()
    } else {
        aa.sqrt() * bb.sqrt()
    };
    let c = a.dot(&b) / denom;
    Ok(c.max(-T::one()).min(T::one()))
}
