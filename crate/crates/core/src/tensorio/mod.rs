//! Binary interchange formats: dense matrix files and named-tensor checkpoints.
//!
//! Both formats are little-endian. Matrix files carry a fixed 24-byte header
//! (`TNTM`, version, dtype, two reserved zero bytes, rows and cols as u64);
//! checkpoints carry a JSON header listing every tensor with its byte offset.

mod checkpoint;
mod matrix;

use thiserror::Error;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, RawCheckpoint, TensorData, TensorRecord};
pub use matrix::{decode_matrix, encode_matrix, read_matrix, write_matrix, DenseMatrix, MATRIX_HEADER_LEN};

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("{extra} unexpected trailing bytes after payload")]
    TrailingBytes { extra: usize },
    #[error("non-finite value at element {index}")]
    NonFiniteValue { index: usize },
    #[error("checkpoint header schema error: {0}")]
    HeaderSchemaError(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
