use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::NumError;
use crate::scalar::Real;

const SYMMETRY_TOL: f64 = 1e-8;

/// Symmetric positive-definite matrix held as its lower Cholesky factor.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix<T> {
    lower: Array2<T>,
}

impl<T: Real> SpdMatrix<T> {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Array2<T> {
        &self.lower
    }

    /// log det Σ = 2 Σ_i log L_ii.
    pub fn log_det(&self) -> T {
        T::c(2.0) * self.half_log_det()
    }

    pub fn half_log_det(&self) -> T {
        self.lower.diag().iter().map(|d| d.ln()).sum()
    }

    /// Solves L y = b by forward substitution.
    pub fn solve_lower(&self, b: ArrayView1<T>) -> Array1<T> {
        let n = self.dim();
        let l = &self.lower;
        let mut y = Array1::zeros(n);
        for i in 0..n {
            let mut s = b[i];
            for j in 0..i {
                s = s - l[[i, j]] * y[j];
            }
            y[i] = s / l[[i, i]];
        }
        y
    }

    /// Solves Lᵀ x = y by back substitution.
    pub fn solve_upper(&self, y: ArrayView1<T>) -> Array1<T> {
        let n = self.dim();
        let l = &self.lower;
        let mut x = Array1::zeros(n);
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s = s - l[[j, i]] * x[j];
            }
            x[i] = s / l[[i, i]];
        }
        x
    }

    /// Σ⁻¹ b.
    pub fn solve(&self, b: ArrayView1<T>) -> Array1<T> {
        let y = self.solve_lower(b);
        self.solve_upper(y.view())
    }

    pub fn inverse(&self) -> Array2<T> {
        let n = self.dim();
        let mut inv = Array2::zeros((n, n));
        let mut e = Array1::zeros(n);
        for j in 0..n {
            e.fill(T::zero());
            e[j] = T::one();
            inv.column_mut(j).assign(&self.solve(e.view()));
        }
        // Symmetrize to remove rounding asymmetry.
        let t = inv.t().to_owned();
        (inv + t) * T::c(0.5)
    }

    /// L Lᵀ.
    pub fn reconstruct(&self) -> Array2<T> {
        self.lower.dot(&self.lower.t())
    }
}

/// Cholesky factorization Σ = L Lᵀ of a symmetric matrix.
pub fn cholesky<T: Real>(a: ArrayView2<T>) -> Result<SpdMatrix<T>, NumError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(NumError::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    for i in 0..n {
        for j in 0..i {
            let gap = (a[[i, j]] - a[[j, i]]).abs();
            let scale = a[[i, j]].abs().max(a[[j, i]].abs()).max(T::one());
            if gap > T::c(SYMMETRY_TOL) * scale {
                return Err(NumError::NotSymmetric {
                    i,
                    j,
                    gap: gap.to_f64_lossy(),
                });
            }
        }
    }
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d = d - l[[j, k]] * l[[j, k]];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(NumError::NotPositiveDefinite { minor: j + 1 });
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s = s - l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Ok(SpdMatrix { lower: l })
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues in descending order.
/// `vectors` holds the matching unit eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub values: Array1<T>,
    pub vectors: Array2<T>,
}

/// Cyclic Jacobi rotations; O(n³) per sweep, meant for small dense matrices.
pub fn symmetric_eigen<T: Real>(a: ArrayView2<T>) -> Result<SymmetricEigen<T>, NumError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(NumError::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    let mut m = a.to_owned();
    let mut v = Array2::<T>::eye(n);
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut total = T::zero();
        for i in 0..n {
            for j in 0..n {
                let x = m[[i, j]] * m[[i, j]];
                total = total + x;
                if i != j {
                    off = off + x;
                }
            }
        }
        if off <= eps * eps * total || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (T::c(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[[j, j]]
            .partial_cmp(&m[[i, i]])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    Ok(SymmetricEigen { values, vectors })
}
