use std::collections::HashSet;
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::TensorIoError;
use crate::scalar::{Dtype, Real};

const MAGIC: &[u8; 8] = b"TNTMCKPT";
const VERSION: u8 = 1;
const PREAMBLE_LEN: usize = 8 + 1 + 8;

/// Header entry for one tensor. `byte_offset` is relative to the payload start.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub byte_offset: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(ArrayD<f32>),
    F64(ArrayD<f64>),
}

impl TensorData {
    pub fn from_real<T: Real>(a: &ArrayD<T>) -> Self {
        match T::DTYPE {
            Dtype::F32 => TensorData::F32(a.mapv(|v| v.to_f32().expect("f32"))),
            Dtype::F64 => TensorData::F64(a.mapv(|v| v.to_f64().expect("f64"))),
        }
    }

    pub fn to_real<T: Real>(&self) -> ArrayD<T> {
        match self {
            TensorData::F32(a) => a.mapv(|v| T::from_f32(v).expect("finite")),
            TensorData::F64(a) => a.mapv(|v| T::from_f64(v).expect("finite")),
        }
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            TensorData::F32(a) => a.shape(),
            TensorData::F64(a) => a.shape(),
        }
    }

    fn byte_len(&self) -> usize {
        self.shape().iter().product::<usize>() * self.dtype().size()
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: serde_json::Value,
    tensors: Vec<TensorRecord>,
}

/// Checkpoint contents before any model-level validation.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCheckpoint {
    pub config: serde_json::Value,
    pub tensors: Vec<(String, TensorData)>,
}

impl RawCheckpoint {
    pub fn get(&self, name: &str) -> Option<&TensorData> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn push_finite<T: Real>(a: &ArrayD<T>, name: &str, out: &mut Vec<u8>) -> Result<(), TensorIoError> {
    for (index, &v) in a.iter().enumerate() {
        if !v.is_finite() {
            log::error!("tensor {name} holds a non-finite value");
            return Err(TensorIoError::NonFiniteValue { index });
        }
        v.extend_le_bytes(out);
    }
    Ok(())
}

pub fn encode_checkpoint(ckpt: &RawCheckpoint) -> Result<Vec<u8>, TensorIoError> {
    let mut records = Vec::with_capacity(ckpt.tensors.len());
    let mut names = HashSet::new();
    let mut offset = 0u64;
    for (name, t) in &ckpt.tensors {
        if !names.insert(name.as_str()) {
            return Err(TensorIoError::HeaderSchemaError(format!("duplicate tensor {name}")));
        }
        records.push(TensorRecord {
            name: name.clone(),
            dtype: t.dtype(),
            shape: t.shape().to_vec(),
            byte_offset: offset,
        });
        offset += t.byte_len() as u64;
    }
    let header = serde_json::to_vec(&Header {
        config: ckpt.config.clone(),
        tensors: records,
    })
    .map_err(|e| TensorIoError::HeaderSchemaError(e.to_string()))?;

    let mut out = Vec::with_capacity(PREAMBLE_LEN + header.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (name, t) in &ckpt.tensors {
        match t {
            TensorData::F32(a) => push_finite(a, name, &mut out)?,
            TensorData::F64(a) => push_finite(a, name, &mut out)?,
        }
    }
    Ok(out)
}

fn parse_tensor<T: Real>(bytes: &[u8], shape: &[usize]) -> Result<ArrayD<T>, TensorIoError> {
    let mut data = Vec::with_capacity(bytes.len() / T::DTYPE.size());
    for (index, chunk) in bytes.chunks_exact(T::DTYPE.size()).enumerate() {
        let v = T::from_le_slice(chunk);
        if !v.is_finite() {
            return Err(TensorIoError::NonFiniteValue { index });
        }
        data.push(v);
    }
    ArrayD::from_shape_vec(shape.to_vec(), data).map_err(|e| TensorIoError::ShapeMismatch(e.to_string()))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<RawCheckpoint, TensorIoError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(TensorIoError::BadMagic);
    }
    if bytes.len() < PREAMBLE_LEN {
        return Err(TensorIoError::TruncatedPayload {
            expected: PREAMBLE_LEN,
            found: bytes.len(),
        });
    }
    if bytes[8] != VERSION {
        return Err(TensorIoError::UnsupportedVersion(bytes[8]));
    }
    let header_len = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|h| h.checked_add(PREAMBLE_LEN))
        .filter(|&end| end <= bytes.len())
        .ok_or(TensorIoError::TruncatedPayload {
            expected: PREAMBLE_LEN.saturating_add(header_len as usize),
            found: bytes.len(),
        })?;
    let header: Header = serde_json::from_slice(&bytes[PREAMBLE_LEN..header_end])
        .map_err(|e| TensorIoError::HeaderSchemaError(e.to_string()))?;
    let payload = &bytes[header_end..];

    let mut spans: Vec<(usize, usize, usize)> = Vec::with_capacity(header.tensors.len());
    let mut names = HashSet::new();
    for (i, rec) in header.tensors.iter().enumerate() {
        if !names.insert(rec.name.as_str()) {
            return Err(TensorIoError::HeaderSchemaError(format!("duplicate tensor {}", rec.name)));
        }
        let len = rec
            .shape
            .iter()
            .try_fold(rec.dtype.size(), |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| TensorIoError::HeaderSchemaError(format!("tensor {} too large", rec.name)))?;
        let start = usize::try_from(rec.byte_offset)
            .map_err(|_| TensorIoError::HeaderSchemaError(format!("bad offset for {}", rec.name)))?;
        let end = start.checked_add(len).ok_or_else(|| {
            TensorIoError::HeaderSchemaError(format!("bad offset for {}", rec.name))
        })?;
        if end > payload.len() {
            return Err(TensorIoError::TruncatedPayload {
                expected: end,
                found: payload.len(),
            });
        }
        spans.push((start, end, i));
    }
    let mut sorted = spans.clone();
    sorted.sort();
    for w in sorted.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(TensorIoError::HeaderSchemaError(format!(
                "tensors {} and {} overlap",
                header.tensors[w[0].2].name, header.tensors[w[1].2].name
            )));
        }
    }
    let used: usize = sorted.iter().map(|(s, e, _)| e - s).sum();
    if used < payload.len() {
        return Err(TensorIoError::TrailingBytes {
            extra: payload.len() - used,
        });
    }

    let mut tensors = Vec::with_capacity(spans.len());
    for (start, end, i) in spans {
        let rec = &header.tensors[i];
        let raw = &payload[start..end];
        let data = match rec.dtype {
            Dtype::F32 => TensorData::F32(parse_tensor(raw, &rec.shape)?),
            Dtype::F64 => TensorData::F64(parse_tensor(raw, &rec.shape)?),
        };
        tensors.push((rec.name.clone(), data));
    }
    Ok(RawCheckpoint {
        config: header.config,
        tensors,
    })
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &RawCheckpoint) -> Result<(), TensorIoError> {
    std::fs::write(path, encode_checkpoint(ckpt)?)?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<RawCheckpoint, TensorIoError> {
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    fn sample() -> RawCheckpoint {
        RawCheckpoint {
            config: serde_json::json!({"k": 2}),
            tensors: vec![
                (
                    "a".into(),
                    TensorData::F64(ArrayD::from_shape_fn(IxDyn(&[2, 3]), |ix| ix[0] as f64 - 0.25 * ix[1] as f64)),
                ),
                ("b".into(), TensorData::F32(ArrayD::from_elem(IxDyn(&[4]), 2.5f32))),
            ],
        }
    }

    #[test]
    fn roundtrip_bit_exact() {
        let c = sample();
        let bytes = encode_checkpoint(&c).unwrap();
        assert_eq!(&bytes[..8], b"TNTMCKPT");
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_checkpoint(&sample()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(TensorIoError::BadMagic)));
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 2]),
            Err(TensorIoError::TruncatedPayload { .. })
        ));
        let mut long = bytes.clone();
        long.extend_from_slice(&[0; 8]);
        assert!(matches!(decode_checkpoint(&long), Err(TensorIoError::TrailingBytes { extra: 8 })));
        let mut v = bytes.clone();
        v[8] = 3;
        assert!(matches!(decode_checkpoint(&v), Err(TensorIoError::UnsupportedVersion(3))));
    }

    fn with_header(header: serde_json::Value, payload: &[u8]) -> Vec<u8> {
        let h = serde_json::to_vec(&header).unwrap();
        let mut out = b"TNTMCKPT".to_vec();
        out.push(1);
        out.extend_from_slice(&(h.len() as u64).to_le_bytes());
        out.extend_from_slice(&h);
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn overlapping_offsets_rejected() {
        let bytes = with_header(
            serde_json::json!({
                "config": {},
                "tensors": [
                    {"name": "x", "dtype": "f64", "shape": [2], "byte_offset": 0},
                    {"name": "y", "dtype": "f64", "shape": [2], "byte_offset": 8}
                ]
            }),
            &[0u8; 24],
        );
        assert!(matches!(decode_checkpoint(&bytes), Err(TensorIoError::HeaderSchemaError(_))));
    }

    #[test]
    fn malformed_header_and_duplicates() {
        let bytes = with_header(serde_json::json!({"tensors": 3}), &[]);
        assert!(matches!(decode_checkpoint(&bytes), Err(TensorIoError::HeaderSchemaError(_))));
        let dup = RawCheckpoint {
            config: serde_json::Value::Null,
            tensors: vec![
                ("a".into(), TensorData::F32(ArrayD::zeros(IxDyn(&[1])))),
                ("a".into(), TensorData::F32(ArrayD::zeros(IxDyn(&[1])))),
            ],
        };
        assert!(matches!(encode_checkpoint(&dup), Err(TensorIoError::HeaderSchemaError(_))));
    }
}
