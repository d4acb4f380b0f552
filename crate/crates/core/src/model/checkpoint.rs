//! Model persistence on top of the generic checkpoint container.

use std::path::Path;

use ndarray::{Array2, Array3, ArrayD, Ix2, Ix3};
use serde::{Deserialize, Serialize};

use super::{Encoder, EncoderConfig, ModelError, PriorSpec, TntmModel, TopicParams, TOPIC_TENSOR_NAMES};
use crate::scalar::{Dtype, Real};
use crate::tensorio::{read_checkpoint, write_checkpoint, RawCheckpoint, TensorData, TensorIoError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub k: usize,
    pub n: usize,
    pub p: usize,
    pub rank: usize,
    pub alpha: f64,
    pub dtype: Dtype,
    pub encoder: EncoderConfig,
    pub bn_initialized: bool,
}

impl<T: Real> TntmModel<T> {
    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            k: self.num_topics(),
            n: self.vocab_size,
            p: self.topics.dim(),
            rank: self.topics.rank(),
            alpha: self.prior.alpha.to_f64_lossy(),
            dtype: T::DTYPE,
            encoder: self.encoder.config.clone(),
            bn_initialized: self.encoder.stats_initialized,
        }
    }

    pub fn to_raw(&self) -> RawCheckpoint {
        let mut tensors = vec![
            ("topic_mu".to_string(), TensorData::from_real(&self.topics.mu.clone().into_dyn())),
            ("topic_A".to_string(), TensorData::from_real(&self.topics.a.clone().into_dyn())),
            ("topic_D".to_string(), TensorData::from_real(&self.topics.d.clone().into_dyn())),
        ];
        for (name, t) in self.encoder.tensor_names().into_iter().zip(self.encoder.tensors()) {
            tensors.push((name, TensorData::from_real(&t.to_owned())));
        }
        RawCheckpoint {
            config: serde_json::to_value(self.config()).expect("config serializes"),
            tensors,
        }
    }

    pub fn from_raw(raw: &RawCheckpoint) -> Result<Self, ModelError> {
        let cfg: ModelConfig = serde_json::from_value(raw.config.clone())
            .map_err(|e| TensorIoError::HeaderSchemaError(format!("model config: {e}")))?;
        if cfg.encoder.num_topics != cfg.k {
            return Err(TensorIoError::ShapeMismatch(format!(
                "encoder has {} topics, config K = {}",
                cfg.encoder.num_topics, cfg.k
            ))
            .into());
        }
        let fetch = |name: &str, shape: &[usize]| -> Result<ArrayD<T>, TensorIoError> {
            let t = raw
                .get(name)
                .ok_or_else(|| TensorIoError::HeaderSchemaError(format!("missing tensor {name}")))?;
            if t.shape() != shape {
                return Err(TensorIoError::ShapeMismatch(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            Ok(t.to_real())
        };
        let dims2 = |a: ArrayD<T>| a.into_dimensionality::<Ix2>().expect("checked");

        let (k, p, r) = (cfg.k, cfg.p, cfg.rank);
        let mu: Array2<T> = dims2(fetch(TOPIC_TENSOR_NAMES[0], &[k, p])?);
        let a: Array3<T> = fetch(TOPIC_TENSOR_NAMES[1], &[k, p, r])?
            .into_dimensionality::<Ix3>()
            .expect("checked");
        let d: Array2<T> = dims2(fetch(TOPIC_TENSOR_NAMES[2], &[k, p])?);
        let topics = TopicParams::new(mu, a, d).map_err(|e| TensorIoError::ShapeMismatch(e.to_string()))?;

        let mut encoder = Encoder::<T>::zeros(cfg.encoder.clone());
        let names = encoder.tensor_names();
        for (name, mut slot) in names.iter().zip(encoder.tensors_mut()) {
            let shape = slot.shape().to_vec();
            slot.assign(&fetch(name, &shape)?);
        }
        encoder.stats_initialized = cfg.bn_initialized;
        let prior = PriorSpec::symmetric(k, T::c(cfg.alpha));
        Ok(Self {
            encoder,
            topics,
            prior,
            vocab_size: cfg.n,
        })
    }
}

pub fn save_checkpoint<T: Real>(path: impl AsRef<Path>, model: &TntmModel<T>) -> Result<(), ModelError> {
    Ok(write_checkpoint(path, &model.to_raw())?)
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<TntmModel<T>, ModelError> {
    TntmModel::from_raw(&read_checkpoint(path)?)
}
