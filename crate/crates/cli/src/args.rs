use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tntm::model::EncoderMode;

#[derive(Debug, Parser)]
#[command(name = "tntm", version, about = "Gaussian topics over word embeddings")]
pub struct Cli {
    /// Worker threads for data-parallel kernels; 1 gives a single-threaded run.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize raw documents into vocab.txt and corpus.jsonl.
    Preprocess(PreprocessArgs),
    /// Sample a corpus from planted Gaussian topics.
    Synth(SynthArgs),
    /// Fit a GMM to word embeddings and write the initial checkpoint.
    Init(InitArgs),
    /// Train from a checkpoint.
    Train(TrainArgs),
    /// Write the top words of every topic.
    Topics(TopicsArgs),
    /// Write per-document topic proportions.
    Infer(InferArgs),
    /// Score topics with coherence and diversity metrics.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderArg {
    Bow,
    Docvec,
}

impl From<EncoderArg> for EncoderMode {
    fn from(e: EncoderArg) -> Self {
        match e {
            EncoderArg::Bow => EncoderMode::Bow,
            EncoderArg::Docvec => EncoderMode::Docvec,
        }
    }
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct PreprocessArgs {
    /// JSON lines with "doc_id" and "text".
    #[arg(long)]
    pub raw: PathBuf,
    /// One stopword per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub min_doc_freq: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 200)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 5)]
    pub dim: usize,
    #[arg(long, default_value_t = 2000)]
    pub docs: usize,
    #[arg(long, default_value_t = 50)]
    pub doc_len: usize,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    /// Distance of every planted topic mean from the origin.
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    /// Isotropic variance of every planted topic.
    #[arg(long, default_value_t = 0.25)]
    pub topic_var: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct InitArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub word_emb: PathBuf,
    /// Needed with `--encoder docvec` to size the input layer.
    #[arg(long)]
    pub doc_emb: Option<PathBuf>,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = EncoderArg::Bow)]
    pub encoder: EncoderArg,
    /// Project word embeddings onto this many principal components first.
    #[arg(long)]
    pub pca_dim: Option<usize>,
    /// Rank of the covariance factor A (defaults to the embedding dimension).
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 100)]
    pub gmm_max_iter: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub gmm_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub gmm_reg_covar: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Accept all-zero embedding rows.
    #[arg(long)]
    pub allow_missing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Embeddings in model space (the `word_emb_model.tntm` written by init).
    #[arg(long)]
    pub word_emb: PathBuf,
    #[arg(long)]
    pub doc_emb: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr_encoder: f64,
    #[arg(long, default_value_t = 0.99)]
    pub beta1_encoder: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2_encoder: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr_topics: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1_topics: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2_topics: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub adam_eps: f64,
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    /// Monte-Carlo samples per document.
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write a checkpoint every this many epochs.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub allow_missing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct TopicsArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub word_emb: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub t: usize,
    #[arg(long)]
    pub allow_missing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub doc_emb: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct EvalArgs {
    /// topics.json written by `topics`.
    #[arg(long)]
    pub topics: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub eval_emb: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub t_coherence: usize,
    #[arg(long, default_value_t = 20)]
    pub t_diversity: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub npmi_eps: f64,
    #[arg(long)]
    pub allow_missing: bool,
    #[arg(long)]
    pub out: PathBuf,
}
