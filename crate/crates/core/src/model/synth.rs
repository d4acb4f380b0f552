//! Sampling documents from the generative process, as an oracle for tests.
//!
//! Per document: θ ~ LN(μ_p, Σ_p); per position ζ ~ Cat(θ) and
//! ω ~ N(μ_ζ, Σ_ζ). Each continuous ω is then snapped to its nearest
//! vocabulary embedding (Euclidean) so the trainer can consume counts.

use ndarray::{Array1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{PriorSpec, TopicParams};
use crate::corpus::{Corpus, Document, Vocabulary};
use crate::numkernel::softmax;
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct SyntheticDoc<T> {
    pub theta_true: Vec<T>,
    pub zeta: Vec<usize>,
    pub embeddings: Vec<Array1<T>>,
    pub nearest_word_indices: Vec<usize>,
}

impl<T: Real> SyntheticDoc<T> {
    /// Topic with the largest planted proportion.
    pub fn dominant_topic(&self) -> usize {
        self.theta_true
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > self.theta_true[best] { i } else { best })
    }
}

/// Synthetic vocabulary tokens `w000`, `w001`, …
pub fn synthetic_vocabulary(n: usize) -> Vocabulary {
    let width = n.saturating_sub(1).to_string().len().max(3);
    Vocabulary::new((0..n).map(|i| format!("w{i:0width$}")).collect()).expect("distinct tokens")
}

fn nearest_row<T: Real>(x: &Array1<T>, table: ArrayView2<T>) -> usize {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (i, row) in table.rows().into_iter().enumerate() {
        let d: T = row.iter().zip(x.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn sample_categorical<T: Real, R: Rng>(p: &[T], rng: &mut R) -> usize {
    let u = T::c(rng.random::<f64>());
    let mut acc = T::zero();
    for (i, &w) in p.iter().enumerate() {
        acc = acc + w;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

pub fn generate_synthetic<T: Real>(
    phi: &TopicParams<T>,
    prior: &PriorSpec<T>,
    vocab_embeddings: ArrayView2<T>,
    num_docs: usize,
    doc_len: usize,
    seed: u64,
) -> Result<(Corpus, Vec<SyntheticDoc<T>>), super::ModelError> {
    let k = phi.num_topics();
    let p = phi.dim();
    if vocab_embeddings.ncols() != p {
        return Err(super::ModelError::DimensionMismatch {
            what: "vocabulary embedding columns",
            expected: p,
            got: vocab_embeddings.ncols(),
        });
    }
    if prior.num_topics() != k {
        return Err(super::ModelError::DimensionMismatch {
            what: "prior dimension",
            expected: k,
            got: prior.num_topics(),
        });
    }
    let factors = (0..k).map(|t| phi.factor(t)).collect::<Result<Vec<_>, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| T::c(rng.sample::<f64, _>(StandardNormal));

    let mut documents = Vec::with_capacity(num_docs);
    let mut truth = Vec::with_capacity(num_docs);
    for m in 0..num_docs {
        let theta_hat: Vec<T> = (0..k)
            .map(|j| prior.mu_p[j] + prior.sigma_p_diag[j].sqrt() * normal(&mut rng))
            .collect();
        let theta = softmax(&theta_hat);
        let mut zeta = Vec::with_capacity(doc_len);
        let mut embs = Vec::with_capacity(doc_len);
        let mut words = Vec::with_capacity(doc_len);
        for _ in 0..doc_len {
            let z = sample_categorical(&theta, &mut rng);
            let noise = Array1::from_shape_fn(p, |_| normal(&mut rng));
            let omega = &phi.mu.row(z) + &factors[z].lower().dot(&noise);
            words.push(nearest_row(&omega, vocab_embeddings));
            zeta.push(z);
            embs.push(omega);
        }
        documents.push(Document::from_sequence(format!("doc{m}"), words.clone()));
        truth.push(SyntheticDoc {
            theta_true: theta,
            zeta,
            embeddings: embs,
            nearest_word_indices: words,
        });
    }
    let corpus = Corpus {
        documents,
        vocabulary: synthetic_vocabulary(vocab_embeddings.nrows()),
    };
    Ok((corpus, truth))
}
