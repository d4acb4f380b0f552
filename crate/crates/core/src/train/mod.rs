//! Mini-batch training: SGVB gradients, two Adam optimizers (inference
//! network and topics), global gradient clipping, seeded shuffling.

mod optim;

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use optim::{adam_step, clip_gradients, global_norm, AdamConfig, OptimizerState};

use crate::corpus::Corpus;
use crate::model::{elbo_batch, softmax_rows, Batch, BatchNoise, EncoderMode, Mode, ModelError, TntmModel};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss in epoch {epoch}, batch {batch} (documents {first_doc}..)")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        first_doc: String,
    },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_encoder: f64,
    pub beta1_encoder: f64,
    pub beta2_encoder: f64,
    pub lr_topics: f64,
    pub beta1_topics: f64,
    pub beta2_topics: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    /// Monte-Carlo samples per document.
    pub samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            lr_encoder: 1e-3,
            beta1_encoder: 0.99,
            beta2_encoder: 0.999,
            lr_topics: 1e-4,
            beta1_topics: 0.9,
            beta2_topics: 0.999,
            adam_eps: 1e-8,
            clip_norm: 5.0,
            samples: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.samples == 0 {
            return bad("samples must be at least 1");
        }
        if !(self.lr_encoder >= 0.0 && self.lr_topics >= 0.0) {
            return bad("learning rates must be non-negative");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        for b in [self.beta1_encoder, self.beta2_encoder, self.beta1_topics, self.beta2_topics] {
            if !(0.0..1.0).contains(&b) {
                return bad("Adam betas must lie in [0, 1)");
            }
        }
        Ok(())
    }

    fn encoder_adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr_encoder,
            beta1: self.beta1_encoder,
            beta2: self.beta2_encoder,
            eps: self.adam_eps,
        }
    }

    fn topic_adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr_topics,
            beta1: self.beta1_topics,
            beta2: self.beta2_topics,
            eps: self.adam_eps,
        }
    }
}

/// Encoder inputs and counts for every document, row-aligned.
#[derive(Clone, Debug)]
pub struct TrainData<T> {
    pub doc_ids: Vec<String>,
    pub inputs: Array2<T>,
    pub bows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> TrainData<T> {
    /// Bag-of-words inputs when `doc_embeddings` is `None`, else the given rows.
    pub fn new(corpus: &Corpus, doc_embeddings: Option<ArrayView2<T>>) -> Result<Self, TrainError> {
        let m = corpus.num_documents();
        let n = corpus.vocab_size();
        let bows: Vec<Vec<(usize, T)>> = corpus
            .documents
            .iter()
            .map(|d| d.bow.iter().map(|&(v, c)| (v, T::from_usize_lossy(c as usize))).collect())
            .collect();
        let inputs = match doc_embeddings {
            Some(e) => {
                if e.nrows() != m {
                    return Err(TrainError::ShapeMismatch(format!(
                        "{} document embeddings for {m} documents",
                        e.nrows()
                    )));
                }
                e.to_owned()
            }
            None => {
                let mut x = Array2::zeros((m, n));
                for (d, bow) in bows.iter().enumerate() {
                    for &(v, c) in bow {
                        x[[d, v]] = c;
                    }
                }
                x
            }
        };
        Ok(Self {
            doc_ids: corpus.documents.iter().map(|d| d.doc_id.clone()).collect(),
            inputs,
            bows,
        })
    }

    pub fn len(&self) -> usize {
        self.bows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bows.is_empty()
    }

    pub fn batch(&self, idx: &[usize]) -> Batch<T> {
        Batch {
            inputs: self.inputs.select(Axis(0), idx),
            bows: idx.iter().map(|&i| self.bows[i].clone()).collect(),
        }
    }
}

/// Per-document means over one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub elbo: f64,
    pub kl: f64,
    pub recon: f64,
    pub collapse_stat: f64,
    pub wall_ms: u64,
}

/// Mean over documents of max_k softmax(μ_q)_k.
pub fn collapse_stat<T: Real>(mu_q: ArrayView2<T>) -> T {
    let theta = softmax_rows(mu_q);
    let sum: T = theta
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().fold(T::neg_infinity(), T::max))
        .sum();
    sum / T::from_usize_lossy(theta.nrows().max(1))
}

pub struct Trainer<T> {
    pub config: TrainConfig,
    pub encoder_opt: OptimizerState<T>,
    pub topic_opt: OptimizerState<T>,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<T: Real> Trainer<T> {
    pub fn new(config: TrainConfig, model: &TntmModel<T>) -> Result<Self, TrainError> {
        config.validate()?;
        let trainable = model.trainable();
        let n_enc = model.encoder.trainable_names().len();
        let encoder_opt = OptimizerState::for_params(config.encoder_adam(), &trainable[..n_enc]);
        let topic_opt = OptimizerState::for_params(config.topic_adam(), &trainable[n_enc..]);
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            encoder_opt,
            topic_opt,
            epoch: 0,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// One pass over the data in a seeded random order.
    pub fn run_epoch(
        &mut self,
        model: &mut TntmModel<T>,
        embeddings: ArrayView2<T>,
        data: &TrainData<T>,
    ) -> Result<EpochRecord, TrainError> {
        if data.is_empty() {
            return Err(ModelError::EmptyBatch.into());
        }
        if data.inputs.ncols() != model.encoder.input_dim() {
            return Err(TrainError::ShapeMismatch(format!(
                "encoder expects {} inputs, data has {}",
                model.encoder.input_dim(),
                data.inputs.ncols()
            )));
        }
        let start = Instant::now();
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);

        let n_enc = model.encoder.trainable_names().len();
        let clip = T::c(self.config.clip_norm);
        let (mut elbo, mut kl, mut recon, mut collapse) = (0.0, 0.0, 0.0, 0.0);
        for (bi, idx) in order.chunks(self.config.batch_size).enumerate() {
            let batch = data.batch(idx);
            let b = batch.len();
            let noise = BatchNoise::sample(model, b, self.config.samples, Mode::Train, &mut self.rng);
            let out = elbo_batch(model, embeddings, &batch, &noise, Mode::Train, true)?;
            if !out.elbo.is_finite() {
                log::error!(
                    "non-finite ELBO in epoch {} batch {bi}: kl {} recon {} documents {:?}",
                    self.epoch,
                    out.kl,
                    out.recon,
                    idx.iter().map(|&i| &data.doc_ids[i]).collect::<Vec<_>>()
                );
                return Err(TrainError::NonFiniteLoss {
                    epoch: self.epoch,
                    batch: bi,
                    first_doc: data.doc_ids[idx[0]].clone(),
                });
            }
            elbo += out.elbo.to_f64_lossy();
            kl += out.kl.to_f64_lossy();
            recon += out.recon.to_f64_lossy();
            collapse += collapse_stat(out.encoded.mu_q.view()).to_f64_lossy() * b as f64;

            // Descend on the batch-mean negative ELBO.
            let mut grads = out.grads.expect("requested gradients");
            let neg_inv_b = -T::one() / T::from_usize_lossy(b);
            {
                let mut g = grads.tensors_mut();
                for t in g.iter_mut() {
                    t.mapv_inplace(|v| v * neg_inv_b);
                }
                clip_gradients(&mut g, clip);
            }
            if let Some(stats) = out.stats {
                model.encoder.apply_stats(stats);
            }
            let g = grads.tensors();
            let mut params = model.trainable_mut();
            let (p_enc, p_top) = params.split_at_mut(n_enc);
            adam_step(p_enc, &g[..n_enc], &mut self.encoder_opt)?;
            adam_step(p_top, &g[n_enc..], &mut self.topic_opt)?;
        }
        let m = data.len() as f64;
        let record = EpochRecord {
            epoch: self.epoch,
            elbo: elbo / m,
            kl: kl / m,
            recon: recon / m,
            collapse_stat: collapse / m,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        log::info!(
            "epoch {} elbo {:.4} kl {:.4} recon {:.4} collapse {:.4}",
            record.epoch,
            record.elbo,
            record.kl,
            record.recon,
            record.collapse_stat
        );
        self.epoch += 1;
        Ok(record)
    }
}

/// Runs `config.epochs` epochs, calling `on_epoch` after each one.
pub fn train<T: Real, F>(
    model: &mut TntmModel<T>,
    embeddings: ArrayView2<T>,
    data: &TrainData<T>,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<Vec<EpochRecord>, TrainError>
where
    F: FnMut(&EpochRecord, &TntmModel<T>) -> Result<(), TrainError>,
{
    let expect_bow = model.encoder.config.mode == EncoderMode::Bow;
    if expect_bow && data.inputs.ncols() != model.vocab_size {
        return Err(TrainError::ShapeMismatch(format!(
            "bag-of-words encoder over {} words, inputs have {} columns",
            model.vocab_size,
            data.inputs.ncols()
        )));
    }
    let mut trainer = Trainer::new(config.clone(), model)?;
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let rec = trainer.run_epoch(model, embeddings, data)?;
        on_epoch(&rec, model)?;
        history.push(rec);
    }
    Ok(history)
}

/// Per-document mean ELBO in evaluation mode with `samples` draws per document.
pub fn evaluate_elbo<T: Real>(
    model: &TntmModel<T>,
    embeddings: ArrayView2<T>,
    data: &TrainData<T>,
    batch_size: usize,
    samples: usize,
    seed: u64,
) -> Result<f64, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch_size.max(1)) {
        let batch = data.batch(chunk);
        let noise = BatchNoise::sample(model, chunk.len(), samples.max(1), Mode::Eval, &mut rng);
        let out = elbo_batch(model, embeddings, &batch, &noise, Mode::Eval, false)?;
        total += out.elbo.to_f64_lossy();
    }
    Ok(total / data.len().max(1) as f64)
}
