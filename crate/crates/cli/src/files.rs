use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;
use tntm::corpus::{Corpus, Vocabulary};
use tntm::tensorio::{read_matrix, write_matrix, DenseMatrix};

use crate::error::CliError;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn read_vocab(path: &Path) -> Result<Vocabulary, CliError> {
    exists(path)?;
    Ok(Vocabulary::read(path)?)
}

pub fn read_corpus(path: &Path, vocab: Vocabulary) -> Result<Corpus, CliError> {
    exists(path)?;
    Ok(Corpus::read_jsonl(path, vocab)?)
}

pub fn exists(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::io(path, "file not found"))
    }
}

/// Reads a matrix file as f64, checking the row count and rejecting all-zero
/// rows unless `allow_zero_rows`.
pub fn read_embeddings(
    path: &Path,
    expected_rows: Option<usize>,
    allow_zero_rows: bool,
) -> Result<Array2<f64>, CliError> {
    exists(path)?;
    let m: Array2<f64> = read_matrix(path)?.to_real();
    if let Some(rows) = expected_rows {
        if m.nrows() != rows {
            return Err(CliError::module(
                "ShapeMismatch",
                format!("{}: {} rows, expected {rows}", path.display(), m.nrows()),
            ));
        }
    }
    if !allow_zero_rows {
        if let Some(i) = m.rows().into_iter().position(|r| r.iter().all(|&v| v == 0.0)) {
            return Err(CliError::module(
                "ZeroEmbeddingRow",
                format!("{}: row {i} is all zeros (pass --allow-missing to accept)", path.display()),
            ));
        }
    }
    Ok(m)
}

pub fn write_embeddings(path: &Path, m: &Array2<f64>) -> Result<(), CliError> {
    Ok(write_matrix(path, &DenseMatrix::F64(m.clone()))?)
}

fn to_value<S: Serialize>(value: &S) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(value).map_err(|e| CliError::module("Serialize", e.to_string()))
}

/// serde_json writes NaN as null, so numeric outputs are checked before serialization.
pub fn finite(what: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::module("NonFiniteValue", format!("{what} is {v}")))
    }
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let v = to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    fs::write(path, s).map_err(|e| CliError::io(path, e))
}

pub fn write_jsonl<S: Serialize>(path: &Path, rows: &[S]) -> Result<(), CliError> {
    let mut s = String::new();
    for r in rows {
        let v = to_value(r)?;
        s.push_str(&serde_json::to_string(&v).expect("value serializes"));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| CliError::io(path, e))
}

/// Merges `value` under `key` into `<dir>/config.json`.
pub fn record_config<S: Serialize>(dir: &Path, key: &str, value: &S) -> Result<(), CliError> {
    let path = dir.join("config.json");
    let mut root = match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).unwrap_or_else(|_| serde_json::json!({})),
        Err(_) => serde_json::json!({}),
    };
    if !root.is_object() {
        root = serde_json::json!({});
    }
    root[key] = to_value(value)?;
    write_json(&path, &root)
}
