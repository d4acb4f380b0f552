//! Inference network: linear → skip blocks → two linear heads (μ_q, log σ²_q).
//!
//! A skip block computes `dropout(bn(leaky_relu(W h + b) + h))`. The residual
//! add is applied when the block keeps the width of its input; a block that
//! changes width has no skip path. Batch statistics are used in training mode
//! and running statistics in evaluation mode.

use ndarray::{Array1, Array2, ArrayD, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    /// Bag-of-words count vectors of length N.
    Bow,
    /// Precomputed document embeddings.
    Docvec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub mode: EncoderMode,
    pub input_dim: usize,
    pub first_width: usize,
    pub block_widths: Vec<usize>,
    pub num_topics: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl EncoderConfig {
    /// Bag-of-words network: first layer as wide as the vocabulary, two
    /// 200-unit skip blocks, dropout 0.3.
    pub fn bow(vocab_size: usize, num_topics: usize) -> Self {
        Self {
            mode: EncoderMode::Bow,
            input_dim: vocab_size,
            first_width: vocab_size,
            block_widths: vec![200, 200],
            num_topics,
            dropout: 0.3,
            leaky_slope: 0.01,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }

    /// Document-embedding network: 200-unit first layer, same trunk, no dropout.
    pub fn docvec(embedding_dim: usize, num_topics: usize) -> Self {
        Self {
            mode: EncoderMode::Docvec,
            input_dim: embedding_dim,
            first_width: 200,
            dropout: 0.0,
            ..Self::bow(embedding_dim, num_topics)
        }
    }

    fn block_input(&self, i: usize) -> usize {
        if i == 0 {
            self.first_width
        } else {
            self.block_widths[i - 1]
        }
    }

    fn trunk_width(&self) -> usize {
        self.block_widths.last().copied().unwrap_or(self.first_width)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    /// out × in
    pub w: Array2<T>,
    pub b: Array1<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Array2::zeros((output, input)),
            b: Array1::zeros(output),
        }
    }

    /// Uniform(−1/√in, 1/√in) for weights and biases.
    pub fn init<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Self {
            w: Array2::from_shape_fn((output, input), |_| T::c(rng.random_range(-bound..bound))),
            b: Array1::from_shape_fn(output, |_| T::c(rng.random_range(-bound..bound))),
        }
    }

    fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        x.dot(&self.w.t()) + &self.b
    }

    /// Returns (dW, db, dx).
    fn backward(&self, x: ArrayView2<T>, dy: ArrayView2<T>) -> (Array2<T>, Array1<T>, Array2<T>) {
        (dy.t().dot(&x), dy.sum_axis(Axis(0)), dy.dot(&self.w))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkipBlock<T> {
    pub linear: Linear<T>,
    pub bn: BatchNorm<T>,
}

impl<T: Real> SkipBlock<T> {
    pub fn has_residual(&self) -> bool {
        self.linear.w.nrows() == self.linear.w.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<T> {
    pub config: EncoderConfig,
    pub linear0: Linear<T>,
    pub blocks: Vec<SkipBlock<T>>,
    pub head_mu: Linear<T>,
    pub head_logvar: Linear<T>,
    /// Set once running statistics have absorbed at least one training batch.
    pub stats_initialized: bool,
}

/// Variational parameters for a batch: B×K means and log-variances.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput<T> {
    pub mu_q: Array2<T>,
    pub log_var_q: Array2<T>,
}

/// Per-block scaled dropout masks (entries 0 or 1/(1−p)).
pub type DropoutMasks<T> = Vec<Option<Array2<T>>>;

struct BlockCache<T> {
    input: Array2<T>,
    pre: Array2<T>,
    xhat: Array2<T>,
    inv_std: Array1<T>,
    batch_stats: bool,
}

pub struct ForwardCache<T> {
    input: Array2<T>,
    blocks: Vec<BlockCache<T>>,
    trunk: Array2<T>,
    masks: DropoutMasks<T>,
}

/// Running statistics a training batch would write back, one pair per block.
pub type StatsUpdate<T> = Vec<(Array1<T>, Array1<T>)>;

#[derive(Clone, Debug)]
pub struct EncoderGrads<T> {
    pub tensors: Vec<ArrayD<T>>,
}

impl<T: Real> Encoder<T> {
    pub fn new<R: Rng>(config: EncoderConfig, rng: &mut R) -> Self {
        let linear0 = Linear::init(config.input_dim, config.first_width, rng);
        let blocks = (0..config.block_widths.len())
            .map(|i| SkipBlock {
                linear: Linear::init(config.block_input(i), config.block_widths[i], rng),
                bn: BatchNorm::new(config.block_widths[i]),
            })
            .collect();
        let trunk = config.trunk_width();
        let head_mu = Linear::init(trunk, config.num_topics, rng);
        let head_logvar = Linear::init(trunk, config.num_topics, rng);
        Self {
            config,
            linear0,
            blocks,
            head_mu,
            head_logvar,
            stats_initialized: false,
        }
    }

    /// All weights zero, batch-norm at identity.
    pub fn zeros(config: EncoderConfig) -> Self {
        let blocks = (0..config.block_widths.len())
            .map(|i| SkipBlock {
                linear: Linear::zeros(config.block_input(i), config.block_widths[i]),
                bn: BatchNorm::new(config.block_widths[i]),
            })
            .collect();
        let trunk = config.trunk_width();
        Self {
            linear0: Linear::zeros(config.input_dim, config.first_width),
            blocks,
            head_mu: Linear::zeros(trunk, config.num_topics),
            head_logvar: Linear::zeros(trunk, config.num_topics),
            config,
            stats_initialized: false,
        }
    }

    pub fn num_topics(&self) -> usize {
        self.config.num_topics
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    /// Dropout masks for one training batch. `None` where dropout is off.
    pub fn sample_masks<R: Rng>(&self, batch: usize, mode: Mode, rng: &mut R) -> DropoutMasks<T> {
        let p = self.config.dropout;
        self.blocks
            .iter()
            .map(|b| {
                if mode == Mode::Eval || p <= 0.0 {
                    return None;
                }
                let keep = T::c(1.0 / (1.0 - p));
                Some(Array2::from_shape_fn((batch, b.linear.w.nrows()), |_| {
                    if rng.random::<f64>() < p {
                        T::zero()
                    } else {
                        keep
                    }
                }))
            })
            .collect()
    }

    fn leaky(&self, v: T) -> T {
        if v > T::zero() {
            v
        } else {
            v * T::c(self.config.leaky_slope)
        }
    }

    /// Forward pass over a B×in batch. Returns the output, the cache for
    /// [`Encoder::backward`], and the running statistics this batch implies
    /// (only in training mode).
    pub fn forward(
        &self,
        x: ArrayView2<T>,
        mode: Mode,
        masks: &DropoutMasks<T>,
    ) -> Result<(EncoderOutput<T>, ForwardCache<T>, Option<StatsUpdate<T>>), ModelError> {
        if x.ncols() != self.config.input_dim {
            return Err(ModelError::DimensionMismatch {
                what: "encoder input",
                expected: self.config.input_dim,
                got: x.ncols(),
            });
        }
        let b = x.nrows();
        if b == 0 {
            return Err(ModelError::EmptyBatch);
        }
        if mode == Mode::Eval && !self.stats_initialized && !self.blocks.is_empty() {
            return Err(ModelError::UninitializedBatchStats);
        }
        let eps = T::c(self.config.bn_eps);
        let momentum = T::c(self.config.bn_momentum);
        let bf = T::from_usize_lossy(b);

        let mut h = self.linear0.forward(x);
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut stats = Vec::with_capacity(self.blocks.len());
        for (i, blk) in self.blocks.iter().enumerate() {
            let pre = blk.linear.forward(h.view());
            let mut sum = pre.mapv(|v| self.leaky(v));
            if blk.has_residual() {
                sum += &h;
            }
            let (mean, var, batch_stats) = match mode {
                Mode::Train => {
                    let mean = sum.mean_axis(Axis(0)).expect("rows");
                    let var = (&sum - &mean).mapv(|v| v * v).sum_axis(Axis(0)) / bf;
                    (mean, var, true)
                }
                Mode::Eval => (blk.bn.running_mean.clone(), blk.bn.running_var.clone(), false),
            };
            if batch_stats {
                let unbiased = if b > 1 {
                    &var * (bf / (bf - T::one()))
                } else {
                    var.clone()
                };
                let rm = &blk.bn.running_mean * (T::one() - momentum) + &mean * momentum;
                let rv = &blk.bn.running_var * (T::one() - momentum) + unbiased * momentum;
                stats.push((rm, rv));
            }
            let inv_std = var.mapv(|v| T::one() / (v + eps).sqrt());
            let xhat = (&sum - &mean) * &inv_std;
            let mut out = &xhat * &blk.bn.gamma + &blk.bn.beta;
            if let Some(Some(mask)) = masks.get(i) {
                out = out * mask;
            }
            caches.push(BlockCache {
                input: h,
                pre,
                xhat,
                inv_std,
                batch_stats,
            });
            h = out;
        }
        let output = EncoderOutput {
            mu_q: self.head_mu.forward(h.view()),
            log_var_q: self.head_logvar.forward(h.view()),
        };
        let cache = ForwardCache {
            input: x.to_owned(),
            blocks: caches,
            trunk: h,
            masks: masks.clone(),
        };
        Ok((output, cache, (mode == Mode::Train).then_some(stats)))
    }

    /// Gradients of a scalar objective given its derivatives with respect to
    /// μ_q and log σ²_q (both B×K). Order matches [`Encoder::trainable_names`].
    pub fn backward(&self, cache: &ForwardCache<T>, d_mu: ArrayView2<T>, d_logvar: ArrayView2<T>) -> EncoderGrads<T> {
        let (dw_mu, db_mu, dh_mu) = self.head_mu.backward(cache.trunk.view(), d_mu);
        let (dw_lv, db_lv, dh_lv) = self.head_logvar.backward(cache.trunk.view(), d_logvar);
        let mut dh = dh_mu + dh_lv;
        let slope = T::c(self.config.leaky_slope);

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (i, (blk, bc)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            if let Some(Some(mask)) = cache.masks.get(i) {
                dh *= mask;
            }
            let dgamma = (&dh * &bc.xhat).sum_axis(Axis(0));
            let dbeta = dh.sum_axis(Axis(0));
            let dxhat = &dh * &blk.bn.gamma;
            let dsum = if bc.batch_stats {
                let bf = T::from_usize_lossy(dxhat.nrows());
                let s1 = dxhat.sum_axis(Axis(0));
                let s2 = (&dxhat * &bc.xhat).sum_axis(Axis(0));
                ((&dxhat * bf) - &s1 - &(&bc.xhat * &s2)) * &(&bc.inv_std / bf)
            } else {
                &dxhat * &bc.inv_std
            };
            let dpre = ndarray::Zip::from(&dsum)
                .and(&bc.pre)
                .map_collect(|&g, &a| if a > T::zero() { g } else { g * slope });
            let (dw, db, mut dx) = blk.linear.backward(bc.input.view(), dpre.view());
            if blk.has_residual() {
                dx += &dsum;
            }
            block_grads.push((dw, db, dgamma, dbeta));
            dh = dx;
        }
        block_grads.reverse();
        let (dw0, db0, _) = self.linear0.backward(cache.input.view(), dh.view());

        let mut tensors = vec![dw0.into_dyn(), db0.into_dyn()];
        for (dw, db, dg, dbt) in block_grads {
            tensors.extend([dw.into_dyn(), db.into_dyn(), dg.into_dyn(), dbt.into_dyn()]);
        }
        tensors.extend([dw_mu.into_dyn(), db_mu.into_dyn(), dw_lv.into_dyn(), db_lv.into_dyn()]);
        EncoderGrads { tensors }
    }

    pub fn apply_stats(&mut self, stats: StatsUpdate<T>) {
        for (blk, (m, v)) in self.blocks.iter_mut().zip(stats) {
            blk.bn.running_mean = m;
            blk.bn.running_var = v;
        }
        self.stats_initialized = true;
    }

    /// Checkpoint names of every tensor, trainable or not.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = vec!["enc.linear0.w".to_string(), "enc.linear0.b".to_string()];
        for i in 0..self.blocks.len() {
            for part in ["linear.w", "linear.b", "bn.gamma", "bn.beta", "bn.run_mean", "bn.run_var"] {
                names.push(format!("enc.block{i}.{part}"));
            }
        }
        names.extend(["enc.head_mu.w", "enc.head_mu.b", "enc.head_logvar.w", "enc.head_logvar.b"].map(String::from));
        names
    }

    pub fn tensors(&self) -> Vec<ArrayViewD<'_, T>> {
        let mut out = vec![self.linear0.w.view().into_dyn(), self.linear0.b.view().into_dyn()];
        for blk in &self.blocks {
            out.extend([
                blk.linear.w.view().into_dyn(),
                blk.linear.b.view().into_dyn(),
                blk.bn.gamma.view().into_dyn(),
                blk.bn.beta.view().into_dyn(),
                blk.bn.running_mean.view().into_dyn(),
                blk.bn.running_var.view().into_dyn(),
            ]);
        }
        out.extend([
            self.head_mu.w.view().into_dyn(),
            self.head_mu.b.view().into_dyn(),
            self.head_logvar.w.view().into_dyn(),
            self.head_logvar.b.view().into_dyn(),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut out = vec![self.linear0.w.view_mut().into_dyn(), self.linear0.b.view_mut().into_dyn()];
        for blk in &mut self.blocks {
            out.extend([
                blk.linear.w.view_mut().into_dyn(),
                blk.linear.b.view_mut().into_dyn(),
                blk.bn.gamma.view_mut().into_dyn(),
                blk.bn.beta.view_mut().into_dyn(),
                blk.bn.running_mean.view_mut().into_dyn(),
                blk.bn.running_var.view_mut().into_dyn(),
            ]);
        }
        out.extend([
            self.head_mu.w.view_mut().into_dyn(),
            self.head_mu.b.view_mut().into_dyn(),
            self.head_logvar.w.view_mut().into_dyn(),
            self.head_logvar.b.view_mut().into_dyn(),
        ]);
        out
    }

    fn is_trainable(name: &str) -> bool {
        !name.ends_with("run_mean") && !name.ends_with("run_var")
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.tensor_names().into_iter().filter(|n| Self::is_trainable(n)).collect()
    }

    pub fn trainable(&self) -> Vec<ArrayViewD<'_, T>> {
        let names = self.tensor_names();
        self.tensors()
            .into_iter()
            .zip(names)
            .filter(|(_, n)| Self::is_trainable(n))
            .map(|(t, _)| t)
            .collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let names = self.tensor_names();
        self.tensors_mut()
            .into_iter()
            .zip(names)
            .filter(|(_, n)| Self::is_trainable(n))
            .map(|(t, _)| t)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(mode: EncoderMode) -> EncoderConfig {
        EncoderConfig {
            mode,
            input_dim: 6,
            first_width: 5,
            block_widths: vec![5, 4],
            num_topics: 3,
            dropout: if mode == EncoderMode::Bow { 0.3 } else { 0.0 },
            leaky_slope: 0.01,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut enc = Encoder::<f64>::zeros(small(EncoderMode::Bow));
        let x = Array2::from_shape_fn((4, 6), |(i, j)| (i * j) as f64);
        let (_, _, stats) = enc.forward(x.view(), Mode::Train, &enc.sample_masks(4, Mode::Train, &mut ChaCha8Rng::seed_from_u64(0))).unwrap();
        enc.apply_stats(stats.unwrap());
        let (out, _, none) = enc.forward(x.view(), Mode::Eval, &vec![None, None]).unwrap();
        assert!(none.is_none());
        assert!(out.mu_q.iter().all(|&v| v == 0.0));
        assert!(out.log_var_q.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_before_training_is_rejected() {
        let enc = Encoder::<f64>::zeros(small(EncoderMode::Docvec));
        let x = Array2::zeros((2, 6));
        assert!(matches!(
            enc.forward(x.view(), Mode::Eval, &vec![None, None]),
            Err(ModelError::UninitializedBatchStats)
        ));
    }

    #[test]
    fn constant_batch_normalizes_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder::<f64>::new(small(EncoderMode::Docvec), &mut rng);
        let row = [0.3, -1.0, 2.0, 0.0, 0.5, 1.0];
        let x = Array2::from_shape_fn((5, 6), |(_, j)| row[j]);
        let (_, cache, _) = enc.forward(x.view(), Mode::Train, &vec![None, None]).unwrap();
        for bc in &cache.blocks {
            assert!(bc.xhat.iter().all(|&v| v.abs() < 1e-9));
        }
        // With beta = 0, the trunk output is zero too.
        assert!(cache.trunk.iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn eval_is_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut enc = Encoder::<f64>::new(small(EncoderMode::Bow), &mut rng);
        let x = Array2::from_shape_fn((3, 6), |(i, j)| ((i + 2 * j) % 4) as f64);
        let masks = enc.sample_masks(3, Mode::Train, &mut rng);
        let (_, _, s) = enc.forward(x.view(), Mode::Train, &masks).unwrap();
        enc.apply_stats(s.unwrap());
        let a = enc.forward(x.view(), Mode::Eval, &vec![None, None]).unwrap().0;
        let b = enc.forward(x.view(), Mode::Eval, &vec![None, None]).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn input_dimension_checked() {
        let enc = Encoder::<f64>::zeros(small(EncoderMode::Bow));
        let x = Array2::zeros((2, 5));
        assert!(matches!(
            enc.forward(x.view(), Mode::Train, &vec![None, None]),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn names_align_with_tensors() {
        let enc = Encoder::<f64>::zeros(small(EncoderMode::Bow));
        assert_eq!(enc.tensor_names().len(), enc.tensors().len());
        assert_eq!(enc.trainable_names().len(), enc.trainable().len());
        assert!(enc.tensor_names().contains(&"enc.block1.bn.run_var".to_string()));
        assert!(!enc.trainable_names().contains(&"enc.block1.bn.run_var".to_string()));
    }

    #[test]
    fn eval_masks_are_empty() {
        let enc = Encoder::<f64>::zeros(small(EncoderMode::Bow));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(enc.sample_masks(4, Mode::Eval, &mut rng).iter().all(Option::is_none));
        assert!(enc.sample_masks(4, Mode::Train, &mut rng).iter().all(Option::is_some));
    }
}
