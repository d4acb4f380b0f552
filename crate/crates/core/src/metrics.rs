//! Topic quality metrics over top-word lists.

use std::collections::HashSet;

use ndarray::{Array1, ArrayView2};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::numkernel::{cosine_similarity, NumError};
use crate::scalar::Real;

pub const DEFAULT_T_COHERENCE: usize = 10;
pub const DEFAULT_T_DIVERSITY: usize = 20;
pub const DEFAULT_NPMI_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid topic set: {0}")]
    InvalidTopicSet(String),
    #[error("topic {topic}: zero embedding vector")]
    ZeroVector { topic: usize },
    #[error("evaluation embeddings have {rows} rows, vocabulary has {vocab} words")]
    EmbeddingRows { rows: usize, vocab: usize },
}

/// Top-word indices per topic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopicSet {
    topics: Vec<Vec<usize>>,
}

impl TopicSet {
    pub fn new(topics: Vec<Vec<usize>>, vocab_size: usize) -> Result<Self, MetricsError> {
        if topics.is_empty() {
            return Err(MetricsError::InvalidTopicSet("no topics".into()));
        }
        for (k, words) in topics.iter().enumerate() {
            if words.is_empty() {
                return Err(MetricsError::InvalidTopicSet(format!("topic {k} has no words")));
            }
            let mut seen = HashSet::new();
            for &w in words {
                if w >= vocab_size {
                    return Err(MetricsError::InvalidTopicSet(format!(
                        "topic {k}: word index {w} out of range for {vocab_size} words"
                    )));
                }
                if !seen.insert(w) {
                    return Err(MetricsError::InvalidTopicSet(format!("topic {k}: word {w} repeated")));
                }
            }
        }
        Ok(Self { topics })
    }

    pub fn num_topics(&self) -> usize {
        self.topics.len()
    }

    pub fn topics(&self) -> &[Vec<usize>] {
        &self.topics
    }

    /// The first `t` words of every topic.
    pub fn truncate(&self, t: usize) -> Self {
        Self {
            topics: self.topics.iter().map(|w| w[..t.min(w.len())].to_vec()).collect(),
        }
    }
}

fn check_rows<T>(emb: &ArrayView2<T>, topics: &TopicSet) -> Result<(), MetricsError> {
    let max = topics.topics.iter().flatten().copied().max().unwrap_or(0);
    if max >= emb.nrows() {
        return Err(MetricsError::EmbeddingRows {
            rows: emb.nrows(),
            vocab: max + 1,
        });
    }
    Ok(())
}

fn mean_pairwise<T: Real>(vectors: &[Array1<T>], topic: usize) -> Result<T, MetricsError> {
    let mut sum = T::zero();
    let mut pairs = 0usize;
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            sum = sum
                + cosine_similarity(vectors[i].view(), vectors[j].view()).map_err(|e| match e {
                    NumError::ZeroVector => MetricsError::ZeroVector { topic },
                    other => MetricsError::InvalidTopicSet(other.to_string()),
                })?;
            pairs += 1;
        }
    }
    Ok(sum / T::from_usize_lossy(pairs))
}

/// Mean over topics of the mean pairwise cosine similarity of top-word embeddings.
pub fn embedding_coherence<T: Real>(topics: &TopicSet, eval_embeddings: ArrayView2<T>) -> Result<T, MetricsError> {
    check_rows(&eval_embeddings, topics)?;
    let mut total = T::zero();
    for (k, words) in topics.topics.iter().enumerate() {
        if words.len() < 2 {
            return Err(MetricsError::InvalidTopicSet(format!("topic {k} needs at least two words")));
        }
        let vecs: Vec<Array1<T>> = words.iter().map(|&w| eval_embeddings.row(w).to_owned()).collect();
        total = total + mean_pairwise(&vecs, k)?;
    }
    Ok(total / T::from_usize_lossy(topics.num_topics()))
}

/// Unique top words divided by the total number of top-word slots.
pub fn topic_diversity(topics: &TopicSet) -> f64 {
    let unique: HashSet<usize> = topics.topics.iter().flatten().copied().collect();
    let slots: usize = topics.topics.iter().map(Vec::len).sum();
    unique.len() as f64 / slots as f64
}

/// Mean pairwise cosine similarity between topic centroids (lower is more diverse).
pub fn embedding_diversity<T: Real>(topics: &TopicSet, eval_embeddings: ArrayView2<T>) -> Result<T, MetricsError> {
    check_rows(&eval_embeddings, topics)?;
    if topics.num_topics() < 2 {
        return Err(MetricsError::InvalidTopicSet("embedding diversity needs at least two topics".into()));
    }
    let centroids: Vec<Array1<T>> = topics
        .topics
        .iter()
        .map(|words| {
            let mut c = Array1::<T>::zeros(eval_embeddings.ncols());
            for &w in words {
                c += &eval_embeddings.row(w);
            }
            c / T::from_usize_lossy(words.len())
        })
        .collect();
    for (k, c) in centroids.iter().enumerate() {
        if c.iter().all(|&v| v == T::zero()) {
            return Err(MetricsError::ZeroVector { topic: k });
        }
    }
    mean_pairwise(&centroids, usize::MAX)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NpmiResult {
    pub score: f64,
    pub warnings: Vec<String>,
}

/// NPMI of one word pair from document frequencies over `m` documents.
pub fn npmi_pair(df_i: usize, df_j: usize, df_ij: usize, m: usize, eps: f64) -> f64 {
    if df_ij == m {
        return 1.0;
    }
    let mf = m as f64;
    let p_i = df_i as f64 / mf;
    let p_j = df_j as f64 / mf;
    let p_ij = df_ij as f64 / mf + eps;
    let v = (p_ij / (p_i * p_j)).ln() / -p_ij.ln();
    v.clamp(-1.0, 1.0)
}

/// Document-level Boolean co-occurrence NPMI, averaged over word pairs and then topics.
/// A word that never occurs gives every pair it is in the minimum −1 and a warning.
pub fn npmi_coherence(topics: &TopicSet, corpus: &Corpus, t: usize, eps: f64) -> Result<NpmiResult, MetricsError> {
    let m = corpus.num_documents();
    if m == 0 {
        return Err(MetricsError::InvalidTopicSet("reference corpus is empty".into()));
    }
    let topics = topics.truncate(t);
    let words: HashSet<usize> = topics.topics.iter().flatten().copied().collect();
    let blocks = m.div_ceil(64);
    let mut presence: std::collections::HashMap<usize, Vec<u64>> =
        words.iter().map(|&w| (w, vec![0u64; blocks])).collect();
    for (d, doc) in corpus.documents.iter().enumerate() {
        for &(v, _) in &doc.bow {
            if let Some(bits) = presence.get_mut(&v) {
                bits[d / 64] |= 1 << (d % 64);
            }
        }
    }
    let df = |w: usize| presence[&w].iter().map(|b| b.count_ones() as usize).sum::<usize>();
    let mut warnings = Vec::new();
    let mut absent: Vec<usize> = words.iter().copied().filter(|&w| df(w) == 0).collect();
    absent.sort_unstable();
    for w in &absent {
        let token = corpus.vocabulary.tokens().get(*w).map(String::as_str).unwrap_or("?");
        warnings.push(format!("word {w} ({token}) is absent from the reference corpus"));
        log::warn!("npmi: word {w} ({token}) is absent from the reference corpus");
    }

    let mut total = 0.0;
    for (k, words) in topics.topics.iter().enumerate() {
        if words.len() < 2 {
            return Err(MetricsError::InvalidTopicSet(format!("topic {k} needs at least two words")));
        }
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for a in 0..words.len() {
            for b in a + 1..words.len() {
                let (i, j) = (words[a], words[b]);
                let (di, dj) = (df(i), df(j));
                let v = if di == 0 || dj == 0 {
                    -1.0
                } else {
                    let dij = presence[&i]
                        .iter()
                        .zip(&presence[&j])
                        .map(|(x, y)| (x & y).count_ones() as usize)
                        .sum();
                    npmi_pair(di, dj, dij, m, eps)
                };
                sum += v;
                pairs += 1;
            }
        }
        total += sum / pairs as f64;
    }
    Ok(NpmiResult {
        score: total / topics.num_topics() as f64,
        warnings,
    })
}
