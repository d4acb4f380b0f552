//! Vocabulary, bag-of-words documents and the text preprocessing pipeline.
//!
//! Tokenization lowercases the text and splits on every character that is
//! neither a Unicode letter nor a digit. Stopwords are removed, then tokens
//! that occur in fewer than `min_doc_freq` distinct documents. Documents left
//! without tokens are dropped and their ids reported.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no input documents")]
    EmptyInput,
    #[error("min_doc_freq must be at least 1")]
    InvalidMinDocFreq,
    #[error("preprocessing removed every document")]
    AllDocumentsEmpty,
    #[error("word index {index} out of range for vocabulary of size {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("duplicate vocabulary token {0:?}")]
    DuplicateToken(String),
    #[error("empty vocabulary token at line {0}")]
    EmptyToken(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered set of unique tokens. A token's position is its index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(CorpusError::EmptyToken(i));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(CorpusError::DuplicateToken(t.clone()));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, i: usize) -> Option<&str> {
        self.tokens.get(i).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let mut w = BufWriter::new(File::create(path)?);
        let body = self.tokens.join("\n");
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path)?;
        if text.is_empty() {
            return Self::new(Vec::new());
        }
        let tokens = text
            .strip_suffix('\n')
            .unwrap_or(&text)
            .split('\n')
            .map(|s| s.to_string())
            .collect();
        Self::new(tokens)
    }
}

/// A document as sparse word counts. `bow` is sorted by strictly ascending index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    /// Token indices in text order. Not available for corpora read from bow files.
    pub word_sequence: Option<Vec<usize>>,
    pub bow: Vec<(usize, u32)>,
}

impl Document {
    pub fn from_sequence(doc_id: String, sequence: Vec<usize>) -> Self {
        let mut counts = BTreeMap::new();
        for &w in &sequence {
            *counts.entry(w).or_insert(0u32) += 1;
        }
        Self {
            doc_id,
            word_sequence: Some(sequence),
            bow: counts.into_iter().collect(),
        }
    }

    /// Document length l_d, the total word count.
    pub fn len(&self) -> usize {
        self.bow.iter().map(|&(_, c)| c as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bow.is_empty()
    }

    /// Dense count vector of length `n`.
    pub fn bow_vector<T: Real>(&self, n: usize) -> Result<Vec<T>, CorpusError> {
        let mut out = vec![T::zero(); n];
        for &(i, c) in &self.bow {
            if i >= n {
                return Err(CorpusError::IndexOutOfRange { index: i, n });
            }
            out[i] = T::c(c as f64);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocabulary: Vocabulary,
}

#[derive(Clone, Debug)]
pub struct Preprocessed {
    pub corpus: Corpus,
    /// Ids of the input documents that ended up empty, in input order.
    pub dropped: Vec<String>,
}

/// Lowercase and split on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn preprocess(
    raw_docs: &[(String, String)],
    stopwords: &HashSet<String>,
    min_doc_freq: usize,
) -> Result<Preprocessed, CorpusError> {
    if raw_docs.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    if min_doc_freq == 0 {
        return Err(CorpusError::InvalidMinDocFreq);
    }
    let stop: HashSet<String> = stopwords.iter().map(|s| s.to_lowercase()).collect();

    let tokenized: Vec<Vec<String>> = raw_docs
        .par_iter()
        .map(|(_, text)| {
            tokenize(text)
                .into_iter()
                .filter(|t| !stop.contains(t))
                .collect()
        })
        .collect();

    let mut doc_freq: HashMap<&str, usize> = HashMap::new();
    for toks in &tokenized {
        let distinct: HashSet<&str> = toks.iter().map(String::as_str).collect();
        for t in distinct {
            *doc_freq.entry(t).or_insert(0) += 1;
        }
    }
    let kept: BTreeSet<&str> = doc_freq
        .iter()
        .filter(|&(_, &df)| df >= min_doc_freq)
        .map(|(&t, _)| t)
        .collect();
    let vocabulary = Vocabulary::new(kept.iter().map(|t| t.to_string()).collect())?;

    let mut documents = Vec::new();
    let mut dropped = Vec::new();
    for ((doc_id, _), toks) in raw_docs.iter().zip(&tokenized) {
        let seq: Vec<usize> = toks.iter().filter_map(|t| vocabulary.index_of(t)).collect();
        if seq.is_empty() {
            dropped.push(doc_id.clone());
        } else {
            documents.push(Document::from_sequence(doc_id.clone(), seq));
        }
    }
    if documents.is_empty() {
        return Err(CorpusError::AllDocumentsEmpty);
    }
    Ok(Preprocessed {
        corpus: Corpus {
            documents,
            vocabulary,
        },
        dropped,
    })
}

/// Reads a stopword file, one token per line. Blank lines are ignored.
pub fn read_stopwords(path: impl AsRef<Path>) -> Result<HashSet<String>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect())
}

#[derive(Serialize, Deserialize)]
struct BowLine {
    doc_id: String,
    bow: Vec<(usize, u32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length: Option<usize>,
}

impl Corpus {
    pub fn num_documents(&self) -> usize {
        self.documents.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    /// Tokens of every document joined by single spaces (requires word order).
    pub fn reconstructed_texts(&self) -> Option<Vec<(String, String)>> {
        self.documents
            .iter()
            .map(|d| {
                let seq = d.word_sequence.as_ref()?;
                let text = seq
                    .iter()
                    .map(|&i| self.vocabulary.tokens[i].as_str())
                    .collect::<Vec<_>>()
                    .join(" ");
                Some((d.doc_id.clone(), text))
            })
            .collect()
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let mut w = BufWriter::new(File::create(path)?);
        for d in &self.documents {
            let line = BowLine {
                doc_id: d.doc_id.clone(),
                bow: d.bow.clone(),
                length: Some(d.len()),
            };
            let s = serde_json::to_string(&line).expect("bow line serializes");
            w.write_all(s.as_bytes())?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: impl AsRef<Path>, vocabulary: Vocabulary) -> Result<Self, CorpusError> {
        let reader = BufReader::new(File::open(path)?);
        let n = vocabulary.len();
        let mut documents = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| CorpusError::Parse {
                line: lineno + 1,
                msg,
            };
            let rec: BowLine =
                serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let mut prev: Option<usize> = None;
            for &(i, c) in &rec.bow {
                if i >= n {
                    return Err(CorpusError::IndexOutOfRange { index: i, n });
                }
                if prev.is_some_and(|p| p >= i) {
                    return Err(parse_err("bow indices not strictly ascending".into()));
                }
                if c == 0 {
                    return Err(parse_err("bow count must be positive".into()));
                }
                prev = Some(i);
            }
            let doc = Document {
                doc_id: rec.doc_id,
                word_sequence: None,
                bow: rec.bow,
            };
            if let Some(len) = rec.length {
                if len != doc.len() {
                    return Err(parse_err(format!(
                        "length {len} disagrees with bow total {}",
                        doc.len()
                    )));
                }
            }
            documents.push(doc);
        }
        if documents.is_empty() {
            return Err(CorpusError::EmptyInput);
        }
        Ok(Self {
            documents,
            vocabulary,
        })
    }
}
