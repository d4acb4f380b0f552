//! Numerical primitives: Cholesky factors, Gaussian log-densities, log-space
//! reductions, cosine similarity and a PCA fallback for embedding reduction.

mod density;
mod linalg;
mod logspace;
mod pca;
mod similarity;

use thiserror::Error;

pub use density::gaussian_logpdf;
pub use linalg::{cholesky, symmetric_eigen, SpdMatrix, SymmetricEigen};
pub use logspace::{lse, lss, softmax};
pub use pca::{pca_reduce, Pca};
pub use similarity::cosine_similarity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("matrix is not positive definite (leading minor {minor} failed)")]
    NotPositiveDefinite { minor: usize },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("data has rank {rank}, fewer than the {needed} requested components")]
    RankDeficient { rank: usize, needed: usize },
    #[error("target dimension {target} invalid for {rows}x{cols} input")]
    InvalidTarget { target: usize, rows: usize, cols: usize },
}
