use std::path::Path;

use ndarray::Array2;

use super::TensorIoError;
use crate::scalar::{Dtype, Real};

const MAGIC: &[u8; 4] = b"TNTM";
const VERSION: u8 = 1;
pub const MATRIX_HEADER_LEN: usize = 24;

/// A dense row-major matrix in either on-disk precision.
#[derive(Clone, Debug, PartialEq)]
pub enum DenseMatrix {
    F32(Array2<f32>),
    F64(Array2<f64>),
}

impl DenseMatrix {
    pub fn dtype(&self) -> Dtype {
        match self {
            DenseMatrix::F32(_) => Dtype::F32,
            DenseMatrix::F64(_) => Dtype::F64,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        match self {
            DenseMatrix::F32(m) => m.dim(),
            DenseMatrix::F64(m) => m.dim(),
        }
    }

    /// Converts to the requested scalar type (exact when widening).
    pub fn to_real<T: Real>(&self) -> Array2<T> {
        match self {
            DenseMatrix::F32(m) => m.mapv(|v| T::from_f32(v).expect("finite")),
            DenseMatrix::F64(m) => m.mapv(|v| T::from_f64(v).expect("finite")),
        }
    }

    pub fn from_real<T: Real>(m: &Array2<T>) -> Self {
        match T::DTYPE {
            Dtype::F32 => DenseMatrix::F32(m.mapv(|v| v.to_f32().expect("f32"))),
            Dtype::F64 => DenseMatrix::F64(m.mapv(|v| v.to_f64().expect("f64"))),
        }
    }
}

fn push_values<T: Real>(m: &Array2<T>, out: &mut Vec<u8>) -> Result<(), TensorIoError> {
    for (index, &v) in m.iter().enumerate() {
        if !v.is_finite() {
            return Err(TensorIoError::NonFiniteValue { index });
        }
        v.extend_le_bytes(out);
    }
    Ok(())
}

pub fn encode_matrix(m: &DenseMatrix) -> Result<Vec<u8>, TensorIoError> {
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return Err(TensorIoError::BadHeader("rows and cols must be at least 1".into()));
    }
    let dtype = m.dtype();
    let mut out = Vec::with_capacity(MATRIX_HEADER_LEN + rows * cols * dtype.size());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(dtype.code());
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    match m {
        DenseMatrix::F32(a) => push_values(a, &mut out)?,
        DenseMatrix::F64(a) => push_values(a, &mut out)?,
    }
    Ok(out)
}

fn parse_values<T: Real>(payload: &[u8], rows: usize, cols: usize) -> Result<Array2<T>, TensorIoError> {
    let size = T::DTYPE.size();
    let mut data = Vec::with_capacity(rows * cols);
    for (index, chunk) in payload.chunks_exact(size).enumerate() {
        let v = T::from_le_slice(chunk);
        if !v.is_finite() {
            return Err(TensorIoError::NonFiniteValue { index });
        }
        data.push(v);
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DenseMatrix, TensorIoError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(TensorIoError::BadMagic);
    }
    if bytes.len() < MATRIX_HEADER_LEN {
        return Err(TensorIoError::TruncatedPayload {
            expected: MATRIX_HEADER_LEN,
            found: bytes.len(),
        });
    }
    if bytes[4] != VERSION {
        return Err(TensorIoError::UnsupportedVersion(bytes[4]));
    }
    let dtype = Dtype::from_code(bytes[5]).ok_or(TensorIoError::UnsupportedDtype(bytes[5]))?;
    if bytes[6] != 0 || bytes[7] != 0 {
        return Err(TensorIoError::BadHeader("reserved bytes must be zero".into()));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if rows == 0 || cols == 0 {
        return Err(TensorIoError::BadHeader("rows and cols must be at least 1".into()));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.size() as u64))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| TensorIoError::BadHeader("declared size overflows".into()))?;
    let payload = &bytes[MATRIX_HEADER_LEN..];
    if payload.len() < expected {
        return Err(TensorIoError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(TensorIoError::TrailingBytes {
            extra: payload.len() - expected,
        });
    }
    let (rows, cols) = (rows as usize, cols as usize);
    Ok(match dtype {
        Dtype::F32 => DenseMatrix::F32(parse_values(payload, rows, cols)?),
        Dtype::F64 => DenseMatrix::F64(parse_values(payload, rows, cols)?),
    })
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<(), TensorIoError> {
    std::fs::write(path, encode_matrix(m)?)?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix, TensorIoError> {
    decode_matrix(&std::fs::read(path)?)
}
