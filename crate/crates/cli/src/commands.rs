use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tntm::corpus::{preprocess, read_stopwords};
use tntm::gmm::{fit_gmm, to_topic_params_with_rank, GmmConfig};
use tntm::metrics::{embedding_coherence, embedding_diversity, npmi_coherence, topic_diversity, TopicSet};
use tntm::model::{load_checkpoint, save_checkpoint, EncoderConfig, EncoderMode, TntmModel};
use tntm::numkernel::pca_reduce;
use tntm::train::{train, EpochRecord, TrainConfig, TrainData};
use tntm::TntmModel64;

use crate::args::{EncoderArg, EvalArgs, InferArgs, InitArgs, PreprocessArgs, TopicsArgs, TrainArgs};
use crate::error::CliError;
use crate::files::{
    ensure_dir, exists, finite, read_corpus, read_embeddings, read_vocab, record_config, write_embeddings, write_json,
    write_jsonl,
};

/// Separates the encoder's weight stream from the GMM seeding stream.
const ENCODER_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Deserialize)]
struct RawDoc {
    doc_id: String,
    text: String,
}

pub fn cmd_preprocess(args: &PreprocessArgs) -> Result<(), CliError> {
    exists(&args.raw)?;
    let text = fs::read_to_string(&args.raw).map_err(|e| CliError::io(&args.raw, e))?;
    let mut raw = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: RawDoc = serde_json::from_str(line)
            .map_err(|e| CliError::config(format!("{} line {}: {e}", args.raw.display(), i + 1)))?;
        raw.push((d.doc_id, d.text));
    }
    let stop = match &args.stopwords {
        Some(p) => {
            exists(p)?;
            read_stopwords(p)?
        }
        None => HashSet::new(),
    };
    let pre = preprocess(&raw, &stop, args.min_doc_freq)?;
    ensure_dir(&args.out)?;
    pre.corpus.vocabulary.write(args.out.join("vocab.txt"))?;
    pre.corpus.write_jsonl(args.out.join("corpus.jsonl"))?;
    let dropped: String = pre.dropped.iter().map(|d| format!("{d}\n")).collect();
    let path = args.out.join("dropped.txt");
    fs::write(&path, dropped).map_err(|e| CliError::io(&path, e))?;
    if !pre.dropped.is_empty() {
        log::warn!("{} documents became empty and were dropped", pre.dropped.len());
    }
    record_config(&args.out, "preprocess", args)
}

pub struct InitOutput {
    pub model: TntmModel64,
    /// Word embeddings in model space (after the optional PCA).
    pub embeddings: Array2<f64>,
    pub top_words: Vec<Vec<String>>,
}

#[derive(Serialize)]
struct GmmSummary {
    iterations: usize,
    converged: bool,
    final_loglik: f64,
    restarts: usize,
}

#[derive(Serialize)]
struct InitRecord<'a> {
    args: &'a InitArgs,
    embedding_dim: usize,
    rank: usize,
    gmm: GmmSummary,
}

fn top_tokens(model: &TntmModel64, emb: ArrayView2<f64>, vocab: &tntm::corpus::Vocabulary, t: usize) -> Result<Vec<Vec<String>>, CliError> {
    let lb = model.log_beta(emb)?;
    let t = t.min(vocab.len());
    (0..model.num_topics())
        .map(|k| {
            Ok(model
                .top_words(&lb, k, t)?
                .into_iter()
                .map(|(i, _)| vocab.tokens()[i].clone())
                .collect())
        })
        .collect()
}

pub fn cmd_init(args: &InitArgs) -> Result<InitOutput, CliError> {
    if args.k < 2 {
        return Err(CliError::config("--k must be at least 2"));
    }
    if !(args.alpha > 0.0) {
        return Err(CliError::config("--alpha must be positive"));
    }
    let vocab = read_vocab(&args.vocab)?;
    let mut emb = read_embeddings(&args.word_emb, Some(vocab.len()), args.allow_missing)?;
    if let Some(q) = args.pca_dim {
        if q == 0 || q > emb.ncols() {
            return Err(CliError::config(format!("--pca-dim must lie in 1..={}", emb.ncols())));
        }
        let pca = pca_reduce(emb.view(), q)?;
        log::info!(
            "PCA keeps {:.4} of the variance",
            pca.explained_variance.sum() / pca.total_variance
        );
        emb = pca.projected;
    }
    let p = emb.ncols();
    let rank = args.rank.unwrap_or(p);
    if rank == 0 || rank > p {
        return Err(CliError::config(format!("--rank must lie in 1..={p}")));
    }
    let gmm_cfg = GmmConfig {
        k: args.k,
        seed: args.seed,
        max_iter: args.gmm_max_iter,
        tol: args.gmm_tol,
        reg_covar: args.gmm_reg_covar,
    };
    let fit = fit_gmm(emb.view(), &gmm_cfg)?;
    let topics = to_topic_params_with_rank(&fit, rank)?;

    let enc = match args.encoder {
        EncoderArg::Bow => EncoderConfig::bow(vocab.len(), args.k),
        EncoderArg::Docvec => {
            let path = args
                .doc_emb
                .as_ref()
                .ok_or_else(|| CliError::config("--encoder docvec needs --doc-emb"))?;
            let d = read_embeddings(path, None, true)?;
            EncoderConfig::docvec(d.ncols(), args.k)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ ENCODER_STREAM);
    let model = TntmModel::new(enc, topics, args.alpha, vocab.len(), &mut rng);

    ensure_dir(&args.out)?;
    save_checkpoint(args.out.join("init.ckpt"), &model)?;
    write_embeddings(&args.out.join("word_emb_model.tntm"), &emb)?;
    record_config(
        &args.out,
        "init",
        &InitRecord {
            args,
            embedding_dim: p,
            rank,
            gmm: GmmSummary {
                iterations: fit.iterations,
                converged: fit.converged,
                final_loglik: finite("GMM log-likelihood", fit.final_loglik)?,
                restarts: fit.restarts,
            },
        },
    )?;
    let top_words = top_tokens(&model, emb.view(), &vocab, 5)?;
    Ok(InitOutput {
        model,
        embeddings: emb,
        top_words,
    })
}

fn load_model(path: &Path) -> Result<TntmModel64, CliError> {
    exists(path)?;
    Ok(load_checkpoint(path)?)
}

fn model_inputs(
    model: &TntmModel64,
    corpus: &tntm::corpus::Corpus,
    doc_emb: Option<&Path>,
) -> Result<TrainData<f64>, CliError> {
    match model.encoder.config.mode {
        EncoderMode::Bow => {
            if doc_emb.is_some() {
                log::warn!("bag-of-words encoder ignores --doc-emb");
            }
            Ok(TrainData::new(corpus, None)?)
        }
        EncoderMode::Docvec => {
            let path = doc_emb.ok_or_else(|| CliError::config("document-embedding encoder needs --doc-emb"))?;
            let d = read_embeddings(path, Some(corpus.num_documents()), true)?;
            if d.ncols() != model.encoder.input_dim() {
                return Err(CliError::module(
                    "ShapeMismatch",
                    format!("document embeddings have {} columns, encoder expects {}", d.ncols(), model.encoder.input_dim()),
                ));
            }
            Ok(TrainData::new(corpus, Some(d.view()))?)
        }
    }
}

fn model_embeddings(model: &TntmModel64, path: &Path, allow_missing: bool) -> Result<Array2<f64>, CliError> {
    let emb = read_embeddings(path, Some(model.vocab_size), allow_missing)?;
    if emb.ncols() != model.topics.dim() {
        return Err(CliError::module(
            "ShapeMismatch",
            format!(
                "{}: {} columns, model space has {} (use the word_emb_model.tntm written by init)",
                path.display(),
                emb.ncols(),
                model.topics.dim()
            ),
        ));
    }
    Ok(emb)
}

fn check_vocab(model: &TntmModel64, vocab: &tntm::corpus::Vocabulary) -> Result<(), CliError> {
    if vocab.len() != model.vocab_size {
        return Err(CliError::module(
            "ShapeMismatch",
            format!("vocabulary has {} words, model was built for {}", vocab.len(), model.vocab_size),
        ));
    }
    Ok(())
}

impl TrainArgs {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr_encoder: self.lr_encoder,
            beta1_encoder: self.beta1_encoder,
            beta2_encoder: self.beta2_encoder,
            lr_topics: self.lr_topics,
            beta1_topics: self.beta1_topics,
            beta2_topics: self.beta2_topics,
            adam_eps: self.adam_eps,
            clip_norm: self.clip_norm,
            samples: self.samples,
            seed: self.seed,
        }
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<(TntmModel64, Vec<EpochRecord>), CliError> {
    let cfg = args.train_config();
    cfg.validate()?;
    if args.checkpoint_every == Some(0) {
        return Err(CliError::config("--checkpoint-every must be at least 1"));
    }
    let mut model = load_model(&args.checkpoint)?;
    if model.num_topics() < 2 {
        return Err(CliError::config("training needs at least two topics"));
    }
    let vocab = read_vocab(&args.vocab)?;
    check_vocab(&model, &vocab)?;
    let corpus = read_corpus(&args.corpus, vocab)?;
    let emb = model_embeddings(&model, &args.word_emb, args.allow_missing)?;
    let data = model_inputs(&model, &corpus, args.doc_emb.as_deref())?;

    ensure_dir(&args.out)?;
    record_config(&args.out, "train", args)?;
    let every = args.checkpoint_every;
    let out = args.out.clone();
    let history = train(&mut model, emb.view(), &data, &cfg, |rec, m| {
        if let Some(c) = every {
            if (rec.epoch + 1) % c == 0 {
                save_checkpoint(out.join(format!("checkpoint_epoch{}.ckpt", rec.epoch + 1)), m)?;
            }
        }
        Ok(())
    })?;
    for r in &history {
        finite("epoch ELBO", r.elbo)?;
        finite("epoch collapse statistic", r.collapse_stat)?;
    }
    save_checkpoint(args.out.join("model.ckpt"), &model)?;
    write_jsonl(&args.out.join("history.jsonl"), &history)?;
    Ok((model, history))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicWord {
    pub token: String,
    pub log_likelihood: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicEntry {
    pub id: usize,
    pub top_words: Vec<TopicWord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicsFile {
    pub topics: Vec<TopicEntry>,
}

pub fn cmd_topics(args: &TopicsArgs) -> Result<TopicsFile, CliError> {
    if args.t == 0 {
        return Err(CliError::config("--t must be at least 1"));
    }
    let model = load_model(&args.checkpoint)?;
    let vocab = read_vocab(&args.vocab)?;
    check_vocab(&model, &vocab)?;
    let emb = model_embeddings(&model, &args.word_emb, args.allow_missing)?;
    let lb = model.log_beta(emb.view())?;
    let t = args.t.min(vocab.len());
    let mut topics = Vec::with_capacity(model.num_topics());
    for k in 0..model.num_topics() {
        let words = model
            .top_words(&lb, k, t)?
            .into_iter()
            .map(|(i, ll)| {
                Ok(TopicWord {
                    token: vocab.tokens()[i].clone(),
                    log_likelihood: finite("log-likelihood", ll)?,
                })
            })
            .collect::<Result<_, CliError>>()?;
        topics.push(TopicEntry { id: k, top_words: words });
    }
    let file = TopicsFile { topics };
    ensure_dir(&args.out)?;
    write_json(&args.out.join("topics.json"), &file)?;
    Ok(file)
}

#[derive(Serialize)]
struct ThetaRow<'a> {
    doc_id: &'a str,
    theta: Vec<f64>,
}

pub fn cmd_infer(args: &InferArgs) -> Result<Array2<f64>, CliError> {
    let model = load_model(&args.checkpoint)?;
    let vocab = read_vocab(&args.vocab)?;
    check_vocab(&model, &vocab)?;
    let corpus = read_corpus(&args.corpus, vocab)?;
    let data = model_inputs(&model, &corpus, args.doc_emb.as_deref())?;
    let theta = model.doc_topics(data.inputs.view())?;
    let rows = data
        .doc_ids
        .iter()
        .zip(theta.rows())
        .map(|(id, r)| {
            Ok(ThetaRow {
                doc_id: id,
                theta: r.iter().map(|&v| finite("theta", v)).collect::<Result<_, _>>()?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    ensure_dir(&args.out)?;
    write_jsonl(&args.out.join("theta.jsonl"), &rows)?;
    Ok(theta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub embedding_coherence: f64,
    pub topic_diversity: f64,
    pub embedding_diversity: f64,
    pub npmi: f64,
    pub t_coherence: usize,
    pub t_diversity: usize,
    pub warnings: Vec<String>,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<MetricsFile, CliError> {
    if args.t_coherence < 2 || args.t_diversity == 0 {
        return Err(CliError::config("--t-coherence must be at least 2 and --t-diversity at least 1"));
    }
    exists(&args.topics)?;
    let text = fs::read_to_string(&args.topics).map_err(|e| CliError::io(&args.topics, e))?;
    let file: TopicsFile = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", args.topics.display())))?;
    let vocab = read_vocab(&args.vocab)?;
    let lists = file
        .topics
        .iter()
        .map(|t| {
            t.top_words
                .iter()
                .map(|w| {
                    vocab
                        .index_of(&w.token)
                        .ok_or_else(|| CliError::module("UnknownToken", format!("topic {}: token {:?} not in vocabulary", t.id, w.token)))
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = vocab.len();
    let set = TopicSet::new(lists, n)?;
    let corpus = read_corpus(&args.corpus, vocab)?;
    let emb = read_embeddings(&args.eval_emb, Some(n), args.allow_missing)?;

    let shortest = set.topics().iter().map(Vec::len).min().unwrap_or(0);
    let mut warnings = Vec::new();
    let t_coh = args.t_coherence.min(shortest);
    let t_div = args.t_diversity.min(shortest);
    if t_coh < args.t_coherence || t_div < args.t_diversity {
        warnings.push(format!("topics list only {shortest} words; windows shortened"));
    }
    let coh_set = set.truncate(t_coh);
    let div_set = set.truncate(t_div);
    let npmi = npmi_coherence(&set, &corpus, t_coh, args.npmi_eps)?;
    warnings.extend(npmi.warnings);
    let metrics = MetricsFile {
        embedding_coherence: finite("embedding coherence", embedding_coherence(&coh_set, emb.view())?)?,
        topic_diversity: finite("topic diversity", topic_diversity(&div_set))?,
        embedding_diversity: finite("embedding diversity", embedding_diversity(&div_set, emb.view())?)?,
        npmi: finite("npmi", npmi.score)?,
        t_coherence: t_coh,
        t_diversity: t_div,
        warnings,
    };
    ensure_dir(&args.out)?;
    write_json(&args.out.join("metrics.json"), &metrics)?;
    Ok(metrics)
}
