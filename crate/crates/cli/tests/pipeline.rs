use std::fs;
use std::path::Path;
use std::process::Command;

use tntm_cli::{
    cmd_eval, cmd_infer, cmd_init, cmd_preprocess, cmd_synth, cmd_topics, cmd_train, EncoderArg, EvalArgs, InferArgs,
    InitArgs, PreprocessArgs, SynthArgs, TopicEntry, TopicWord, TopicsArgs, TopicsFile, TrainArgs,
};

fn synth(out: &Path, k: usize, n: usize, m: usize, seed: u64) -> SynthArgs {
    SynthArgs {
        k,
        vocab_size: n,
        dim: 4,
        docs: m,
        doc_len: 40,
        alpha: 0.2,
        separation: 4.0,
        topic_var: 0.25,
        seed,
        out: out.to_path_buf(),
    }
}

fn init(data: &Path, out: &Path, k: usize) -> InitArgs {
    InitArgs {
        vocab: data.join("vocab.txt"),
        word_emb: data.join("word_emb.tntm"),
        doc_emb: None,
        k,
        encoder: EncoderArg::Bow,
        pca_dim: None,
        rank: None,
        alpha: 0.2,
        gmm_max_iter: 100,
        gmm_tol: 1e-3,
        gmm_reg_covar: 1e-6,
        seed: 3,
        allow_missing: false,
        out: out.to_path_buf(),
    }
}

fn train(data: &Path, out: &Path, epochs: usize) -> TrainArgs {
    TrainArgs {
        checkpoint: out.join("init.ckpt"),
        vocab: data.join("vocab.txt"),
        corpus: data.join("corpus.jsonl"),
        word_emb: out.join("word_emb_model.tntm"),
        doc_emb: None,
        epochs,
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
        seed: 3,
        checkpoint_every: Some(2),
        allow_missing: false,
        out: out.to_path_buf(),
    }
}

#[test]
fn init_train_topics_infer_eval_compose() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let run = root.path().join("run");
    cmd_synth(&synth(&data, 3, 60, 200, 1)).unwrap();
    let out = cmd_init(&init(&data, &run, 3)).unwrap();
    assert_eq!(out.top_words.len(), 3);
    assert!(out.top_words.iter().all(|w| w.len() == 5));
    let (_, history) = cmd_train(&train(&data, &run, 4)).unwrap();
    assert_eq!(history.len(), 4);
    assert!(run.join("checkpoint_epoch2.ckpt").exists());
    assert!(run.join("checkpoint_epoch4.ckpt").exists());
    let lines = fs::read_to_string(run.join("history.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 4);
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    for key in ["epoch", "elbo", "kl", "recon", "collapse_stat", "wall_ms"] {
        assert!(first.get(key).is_some(), "history lacks {key}");
    }

    let topics = cmd_topics(&TopicsArgs {
        checkpoint: run.join("model.ckpt"),
        vocab: data.join("vocab.txt"),
        word_emb: run.join("word_emb_model.tntm"),
        t: 20,
        allow_missing: false,
        out: run.clone(),
    })
    .unwrap();
    assert_eq!(topics.topics.len(), 3);
    assert!(topics.topics.iter().all(|t| t.top_words.len() == 20));

    cmd_infer(&InferArgs {
        checkpoint: run.join("model.ckpt"),
        vocab: data.join("vocab.txt"),
        corpus: data.join("corpus.jsonl"),
        doc_emb: None,
        out: run.clone(),
    })
    .unwrap();
    let theta = fs::read_to_string(run.join("theta.jsonl")).unwrap();
    assert_eq!(theta.lines().count(), 200);
    for line in theta.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let sum: f64 = v["theta"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(v["doc_id"].is_string());
    }

    let metrics = cmd_eval(&EvalArgs {
        topics: run.join("topics.json"),
        vocab: data.join("vocab.txt"),
        corpus: data.join("corpus.jsonl"),
        eval_emb: data.join("word_emb.tntm"),
        t_coherence: 10,
        t_diversity: 20,
        npmi_eps: 1e-12,
        allow_missing: false,
        out: run.clone(),
    })
    .unwrap();
    assert!((0.0..=1.0).contains(&metrics.topic_diversity));
    assert!((-1.0..=1.0).contains(&metrics.npmi));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("metrics.json")).unwrap()).unwrap();
    for key in ["embedding_coherence", "topic_diversity", "embedding_diversity", "npmi", "t_coherence", "t_diversity", "warnings"] {
        assert!(json.get(key).is_some(), "metrics lacks {key}");
    }
    let config: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert!(config.get("init").is_some() && config.get("train").is_some());
}

#[test]
fn eval_of_disjoint_topics_reports_full_diversity() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    cmd_synth(&synth(&data, 2, 20, 30, 2)).unwrap();
    let vocab = fs::read_to_string(data.join("vocab.txt")).unwrap();
    let tokens: Vec<&str> = vocab.lines().collect();
    let file = TopicsFile {
        topics: (0..2)
            .map(|k| TopicEntry {
                id: k,
                top_words: tokens[k * 10..k * 10 + 10]
                    .iter()
                    .map(|t| TopicWord {
                        token: t.to_string(),
                        log_likelihood: -1.0,
                    })
                    .collect(),
            })
            .collect(),
    };
    fs::write(data.join("topics.json"), serde_json::to_string(&file).unwrap()).unwrap();
    let m = cmd_eval(&EvalArgs {
        topics: data.join("topics.json"),
        vocab: data.join("vocab.txt"),
        corpus: data.join("corpus.jsonl"),
        eval_emb: data.join("word_emb.tntm"),
        t_coherence: 10,
        t_diversity: 20,
        npmi_eps: 1e-12,
        allow_missing: false,
        out: data.clone(),
    })
    .unwrap();
    assert_eq!(m.topic_diversity, 1.0);
    assert_eq!(m.t_diversity, 10);
    assert!(!m.warnings.is_empty());
}

#[test]
fn synth_is_byte_deterministic() {
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    let b = root.path().join("b");
    cmd_synth(&synth(&a, 3, 40, 50, 7)).unwrap();
    cmd_synth(&synth(&b, 3, 40, 50, 7)).unwrap();
    for f in ["vocab.txt", "corpus.jsonl", "word_emb.tntm", "truth.json", "theta_true.jsonl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn planted_training_improves_and_does_not_collapse() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let run = root.path().join("run");
    let mut s = synth(&data, 5, 200, 2000, 4);
    s.dim = 5;
    s.doc_len = 50;
    cmd_synth(&s).unwrap();
    cmd_init(&init(&data, &run, 5)).unwrap();
    let mut t = train(&data, &run, 6);
    t.checkpoint_every = None;
    let (_, history) = cmd_train(&t).unwrap();
    let elbo: Vec<f64> = history.iter().map(|r| r.elbo).collect();
    // Two-epoch moving average.
    let smooth: Vec<f64> = elbo.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    assert!(smooth.windows(2).all(|w| w[1] > w[0]), "{elbo:?}");
    let bound = 1.0 - 1.0 / (2.0 * 5.0);
    assert!(history.iter().all(|r| r.collapse_stat < bound), "{history:?}");
}

#[test]
fn preprocess_writes_vocab_corpus_and_dropped_ids() {
    let root = tempfile::tempdir().unwrap();
    let raw = root.path().join("raw.jsonl");
    fs::write(
        &raw,
        concat!(
            "{\"doc_id\": \"a\", \"text\": \"The CAT sat!\"}\n",
            "{\"doc_id\": \"b\", \"text\": \"the\"}\n",
            "{\"doc_id\": \"c\", \"text\": \"cat and dog\"}\n"
        ),
    )
    .unwrap();
    let stop = root.path().join("stop.txt");
    fs::write(&stop, "the\nand\n").unwrap();
    let out = root.path().join("pre");
    cmd_preprocess(&PreprocessArgs {
        raw,
        stopwords: Some(stop),
        min_doc_freq: 1,
        out: out.clone(),
    })
    .unwrap();
    assert_eq!(fs::read_to_string(out.join("vocab.txt")).unwrap(), "cat\ndog\nsat");
    assert_eq!(fs::read_to_string(out.join("dropped.txt")).unwrap(), "b\n");
    let corpus = fs::read_to_string(out.join("corpus.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(corpus.lines().next().unwrap()).unwrap();
    assert_eq!(first["doc_id"], "a");
    assert_eq!(first["bow"], serde_json::json!([[0, 1], [2, 1]]));
}

#[test]
fn binary_reports_errors_with_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_tntm");
    let root = tempfile::tempdir().unwrap();
    let vocab = root.path().join("vocab.txt");
    fs::write(&vocab, "a\nb").unwrap();
    let bad = root.path().join("bad.tntm");
    fs::write(&bad, b"XXXXjunkjunkjunkjunkjunkjunk").unwrap();

    let run = |emb: &Path| {
        Command::new(bin)
            .args(["init", "--k", "2", "--vocab"])
            .arg(&vocab)
            .arg("--word-emb")
            .arg(emb)
            .arg("--out")
            .arg(root.path().join("out"))
            .output()
            .unwrap()
    };
    let out = run(&bad);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.lines().any(|l| l.starts_with("ERR BadMagic: ")), "{err}");

    let out = run(&root.path().join("missing.tntm"));
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(bin).args(["train", "--epochs", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
