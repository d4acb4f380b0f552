//! The topic model: logistic-normal prior, inference network, Gaussian topics
//! over word embeddings, and the SGVB estimate of the evidence lower bound.

mod checkpoint;
mod decoder;
mod encoder;
mod prior;
mod synth;
mod topics;

use ndarray::{Array1, Array2, ArrayD, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelConfig};
pub use decoder::{
    kl_divergence, kl_grads, reconstruction_loglik, reconstruction_loglik_sparse, reconstruction_with_grad,
    sample_theta, ThetaSample,
};
pub use encoder::{
    BatchNorm, DropoutMasks, Encoder, EncoderConfig, EncoderGrads, EncoderMode, EncoderOutput, ForwardCache, Linear,
    Mode, SkipBlock, StatsUpdate,
};
pub use prior::PriorSpec;
pub use synth::{generate_synthetic, synthetic_vocabulary, SyntheticDoc};
pub use topics::{log_beta, top_words, topic_grads, LogBeta, TopicError, TopicGrads, TopicParams};

use crate::numkernel::{softmax, NumError};
use crate::scalar::Real;
use crate::tensorio::TensorIoError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("evaluation mode requested before batch-norm statistics were initialized")]
    UninitializedBatchStats,
    #[error("empty batch")]
    EmptyBatch,
    #[error("topic index {index} out of range for {topics} topics")]
    TopicIndexOutOfRange { index: usize, topics: usize },
    #[error("requested {requested} top words from a vocabulary of {vocab}")]
    TooManyWords { requested: usize, vocab: usize },
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Checkpoint(#[from] TensorIoError),
}

pub const TOPIC_TENSOR_NAMES: [&str; 3] = ["topic_mu", "topic_A", "topic_D"];

#[derive(Clone, Debug, PartialEq)]
pub struct TntmModel<T> {
    pub encoder: Encoder<T>,
    pub topics: TopicParams<T>,
    pub prior: PriorSpec<T>,
    pub vocab_size: usize,
}

/// One mini-batch: encoder inputs (B×in) and sparse counts per document.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub inputs: Array2<T>,
    pub bows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> Batch<T> {
    pub fn len(&self) -> usize {
        self.bows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bows.is_empty()
    }
}

/// All randomness of one ELBO evaluation: dropout masks and L draws of ε (B×K each).
#[derive(Clone, Debug)]
pub struct BatchNoise<T> {
    pub masks: DropoutMasks<T>,
    pub epsilon: Vec<Array2<T>>,
}

impl<T: Real> BatchNoise<T> {
    pub fn sample<R: Rng>(model: &TntmModel<T>, batch: usize, samples: usize, mode: Mode, rng: &mut R) -> Self {
        let masks = model.encoder.sample_masks(batch, mode, rng);
        let k = model.num_topics();
        let epsilon = (0..samples)
            .map(|_| Array2::from_shape_fn((batch, k), |_| T::c(rng.sample::<f64, _>(StandardNormal))))
            .collect();
        Self { masks, epsilon }
    }

    /// ε = 0 and no dropout.
    pub fn zero(model: &TntmModel<T>, batch: usize) -> Self {
        Self {
            masks: vec![None; model.encoder.blocks.len()],
            epsilon: vec![Array2::zeros((batch, model.num_topics()))],
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelGrads<T> {
    pub encoder: EncoderGrads<T>,
    pub topics: TopicGrads<T>,
}

impl<T: Real> ModelGrads<T> {
    /// Encoder tensors first, then `topic_mu`, `topic_A`, `topic_D`.
    pub fn tensors(&self) -> Vec<ArrayViewD<'_, T>> {
        let mut out: Vec<ArrayViewD<'_, T>> = self.encoder.tensors.iter().map(|t| t.view()).collect();
        out.extend(self.topic_tensors());
        out
    }

    pub fn encoder_tensors(&self) -> &[ArrayD<T>] {
        &self.encoder.tensors
    }

    pub fn topic_tensors(&self) -> Vec<ArrayViewD<'_, T>> {
        vec![
            self.topics.mu.view().into_dyn(),
            self.topics.a.view().into_dyn(),
            self.topics.d.view().into_dyn(),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut out: Vec<ArrayViewMutD<'_, T>> = self.encoder.tensors.iter_mut().map(|t| t.view_mut()).collect();
        out.extend([
            self.topics.mu.view_mut().into_dyn(),
            self.topics.a.view_mut().into_dyn(),
            self.topics.d.view_mut().into_dyn(),
        ]);
        out
    }
}

#[derive(Clone, Debug)]
pub struct ElboOutput<T> {
    /// Σ_d [−KL_d + recon_d] over the batch.
    pub elbo: T,
    pub kl: T,
    pub recon: T,
    /// Gradients of `elbo` (ascent direction).
    pub grads: Option<ModelGrads<T>>,
    pub encoded: EncoderOutput<T>,
    pub stats: Option<StatsUpdate<T>>,
}

impl<T: Real> TntmModel<T> {
    pub fn new<R: Rng>(config: EncoderConfig, topics: TopicParams<T>, alpha: T, vocab_size: usize, rng: &mut R) -> Self {
        let k = topics.num_topics();
        assert_eq!(config.num_topics, k, "encoder and topics disagree on K");
        Self {
            encoder: Encoder::new(config, rng),
            topics,
            prior: PriorSpec::symmetric(k, alpha),
            vocab_size,
        }
    }

    pub fn num_topics(&self) -> usize {
        self.topics.num_topics()
    }

    pub fn trainable_names(&self) -> Vec<String> {
        let mut names = self.encoder.trainable_names();
        names.extend(TOPIC_TENSOR_NAMES.map(String::from));
        names
    }

    pub fn trainable(&self) -> Vec<ArrayViewD<'_, T>> {
        let mut out = self.encoder.trainable();
        out.extend([
            self.topics.mu.view().into_dyn(),
            self.topics.a.view().into_dyn(),
            self.topics.d.view().into_dyn(),
        ]);
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut out = self.encoder.trainable_mut();
        out.extend([
            self.topics.mu.view_mut().into_dyn(),
            self.topics.a.view_mut().into_dyn(),
            self.topics.d.view_mut().into_dyn(),
        ]);
        out
    }

    pub fn log_beta(&self, embeddings: ArrayView2<T>) -> Result<LogBeta<T>, ModelError> {
        self.check_embeddings(embeddings)?;
        Ok(log_beta(&self.topics, embeddings)?)
    }

    fn check_embeddings(&self, embeddings: ArrayView2<T>) -> Result<(), ModelError> {
        if embeddings.nrows() != self.vocab_size {
            return Err(ModelError::DimensionMismatch {
                what: "word embedding rows",
                expected: self.vocab_size,
                got: embeddings.nrows(),
            });
        }
        if embeddings.ncols() != self.topics.dim() {
            return Err(ModelError::DimensionMismatch {
                what: "word embedding columns",
                expected: self.topics.dim(),
                got: embeddings.ncols(),
            });
        }
        Ok(())
    }

    /// Deterministic topic proportions softmax(μ_q), one row per input.
    pub fn doc_topics(&self, inputs: ArrayView2<T>) -> Result<Array2<T>, ModelError> {
        let masks = vec![None; self.encoder.blocks.len()];
        let (out, _, _) = self.encoder.forward(inputs, Mode::Eval, &masks)?;
        Ok(softmax_rows(out.mu_q.view()))
    }

    /// Monte-Carlo posterior mean of θ over `samples` reparametrized draws.
    pub fn doc_topics_mc<R: Rng>(&self, inputs: ArrayView2<T>, samples: usize, rng: &mut R) -> Result<Array2<T>, ModelError> {
        let masks = vec![None; self.encoder.blocks.len()];
        let (out, _, _) = self.encoder.forward(inputs, Mode::Eval, &masks)?;
        let (b, k) = out.mu_q.dim();
        let mut acc = Array2::<T>::zeros((b, k));
        for _ in 0..samples.max(1) {
            for d in 0..b {
                let eps = Array1::from_shape_fn(k, |_| T::c(rng.sample::<f64, _>(StandardNormal)));
                let s = sample_theta(out.mu_q.row(d), out.log_var_q.row(d), eps.view());
                let mut row = acc.row_mut(d);
                row += &s.theta;
            }
        }
        Ok(acc / T::from_usize_lossy(samples.max(1)))
    }

    pub fn top_words(&self, lb: &LogBeta<T>, k: usize, t: usize) -> Result<Vec<(usize, T)>, ModelError> {
        if k >= lb.num_topics() {
            return Err(ModelError::TopicIndexOutOfRange {
                index: k,
                topics: lb.num_topics(),
            });
        }
        if t > lb.vocab_size() {
            return Err(ModelError::TooManyWords {
                requested: t,
                vocab: lb.vocab_size(),
            });
        }
        Ok(top_words(lb.values.view(), k, t))
    }
}

pub fn softmax_rows<T: Real>(x: ArrayView2<T>) -> Array2<T> {
    let mut out = x.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let s = softmax(row.as_slice().expect("standard layout"));
        row.assign(&Array1::from(s));
    }
    out
}

/// SGVB estimate of the batch ELBO, Σ_d [−KL(q_d‖p) + (1/L) Σ_j log p(u_d | θ̂_dj)],
/// with gradients for every encoder weight and topic parameter when `with_grads`.
pub fn elbo_batch<T: Real>(
    model: &TntmModel<T>,
    embeddings: ArrayView2<T>,
    batch: &Batch<T>,
    noise: &BatchNoise<T>,
    mode: Mode,
    with_grads: bool,
) -> Result<ElboOutput<T>, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let b = batch.len();
    if batch.inputs.nrows() != b {
        return Err(ModelError::DimensionMismatch {
            what: "batch inputs",
            expected: b,
            got: batch.inputs.nrows(),
        });
    }
    let k = model.num_topics();
    let samples = noise.epsilon.len();
    if samples == 0 {
        return Err(ModelError::DimensionMismatch {
            what: "noise samples",
            expected: 1,
            got: 0,
        });
    }
    for eps in &noise.epsilon {
        if eps.dim() != (b, k) {
            return Err(ModelError::DimensionMismatch {
                what: "epsilon rows",
                expected: b,
                got: eps.nrows(),
            });
        }
    }
    for bow in &batch.bows {
        if let Some(&(v, _)) = bow.iter().find(|&&(v, _)| v >= model.vocab_size) {
            return Err(ModelError::DimensionMismatch {
                what: "bow index",
                expected: model.vocab_size,
                got: v,
            });
        }
    }
    let lb = model.log_beta(embeddings)?;
    let (encoded, cache, stats) = model.encoder.forward(batch.inputs.view(), mode, &noise.masks)?;

    let inv_l = T::one() / T::from_usize_lossy(samples);
    let half = T::c(0.5);
    let mut d_mu = Array2::<T>::zeros((b, k));
    let mut d_lv = Array2::<T>::zeros((b, k));
    let mut d_lb = Array2::<T>::zeros(lb.values.dim());
    let mut kl_total = T::zero();
    let mut recon_total = T::zero();
    let mut theta_hat = vec![T::zero(); k];
    for (d, bow) in batch.bows.iter().enumerate() {
        let mu = encoded.mu_q.row(d);
        let lv = encoded.log_var_q.row(d);
        kl_total = kl_total + kl_divergence(mu, lv, &model.prior);
        if with_grads {
            let (gm, gl) = kl_grads(mu, lv, &model.prior);
            for j in 0..k {
                d_mu[[d, j]] = d_mu[[d, j]] - gm[j];
                d_lv[[d, j]] = d_lv[[d, j]] - gl[j];
            }
        }
        for eps in &noise.epsilon {
            for j in 0..k {
                theta_hat[j] = mu[j] + (lv[j] * half).exp() * eps[[d, j]];
            }
            if with_grads {
                let (r, g) = reconstruction_with_grad(lb.values.view(), &theta_hat, bow, inv_l, d_lb.view_mut());
                recon_total = recon_total + r * inv_l;
                for j in 0..k {
                    let gj = g[j] * inv_l;
                    d_mu[[d, j]] = d_mu[[d, j]] + gj;
                    d_lv[[d, j]] = d_lv[[d, j]] + gj * half * (lv[j] * half).exp() * eps[[d, j]];
                }
            } else {
                recon_total = recon_total + reconstruction_loglik_sparse(lb.values.view(), &theta_hat, bow) * inv_l;
            }
        }
    }
    let grads = with_grads.then(|| ModelGrads {
        encoder: model.encoder.backward(&cache, d_mu.view(), d_lv.view()),
        topics: topic_grads(&model.topics, &lb, embeddings, d_lb.view()),
    });
    Ok(ElboOutput {
        elbo: recon_total - kl_total,
        kl: kl_total,
        recon: recon_total,
        grads,
        encoded,
        stats,
    })
}
