use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use tntm::model::{generate_synthetic, PriorSpec, TopicParams};

use crate::args::SynthArgs;
use crate::error::CliError;
use crate::files::{ensure_dir, record_config, write_embeddings, write_json, write_jsonl};

/// The planted model behind a synthetic corpus (`truth.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub topic_mu: Vec<Vec<f64>>,
    pub topic_var: f64,
    pub alpha: f64,
    /// Planted topic of every vocabulary word's embedding.
    pub word_topic: Vec<usize>,
    /// Topic with the largest planted proportion, per document.
    pub dominant_topic: Vec<usize>,
}

#[derive(Serialize)]
struct ThetaTrue<'a> {
    doc_id: &'a str,
    theta: &'a [f64],
    dominant_topic: usize,
}

/// Topic means at distance `radius` from the origin: orthogonal directions
/// when K ≤ P, otherwise independent random directions.
fn planted_means(k: usize, p: usize, radius: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut mu = Array2::<f64>::zeros((k, p));
    for t in 0..k {
        loop {
            let mut v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            if t < p {
                for s in 0..t {
                    let dot: f64 = v.iter().zip(mu.row(s)).map(|(a, b)| a * b).sum::<f64>() / (radius * radius);
                    for (x, m) in v.iter_mut().zip(mu.row(s)) {
                        *x -= dot * m;
                    }
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                for (j, x) in v.iter().enumerate() {
                    mu[[t, j]] = radius * x / norm;
                }
                break;
            }
        }
    }
    mu
}

pub fn cmd_synth(args: &SynthArgs) -> Result<PlantedTruth, CliError> {
    if args.k < 1 || args.dim < 1 || args.docs < 1 || args.doc_len < 1 {
        return Err(CliError::config("--k, --dim, --docs and --doc-len must be positive"));
    }
    if args.vocab_size < args.k {
        return Err(CliError::config("--vocab-size must be at least --k"));
    }
    if !(args.alpha > 0.0 && args.topic_var > 0.0 && args.separation >= 0.0) {
        return Err(CliError::config("--alpha and --topic-var must be positive, --separation non-negative"));
    }
    let (k, p, n) = (args.k, args.dim, args.vocab_size);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mu = planted_means(k, p, args.separation, &mut rng);
    let sd = args.topic_var.sqrt();
    let word_topic: Vec<usize> = (0..n).map(|v| v % k).collect();
    let emb = Array2::from_shape_fn((n, p), |(v, j)| mu[[word_topic[v], j]] + sd * rng.sample::<f64, _>(StandardNormal));

    let phi = TopicParams::isotropic(mu.clone(), args.topic_var.ln(), p)?;
    let prior = PriorSpec::symmetric(k, args.alpha);
    let (corpus, docs) = generate_synthetic(&phi, &prior, emb.view(), args.docs, args.doc_len, args.seed.wrapping_add(1))?;

    ensure_dir(&args.out)?;
    corpus.vocabulary.write(args.out.join("vocab.txt"))?;
    corpus.write_jsonl(args.out.join("corpus.jsonl"))?;
    write_embeddings(&args.out.join("word_emb.tntm"), &emb)?;
    let rows: Vec<ThetaTrue> = corpus
        .documents
        .iter()
        .zip(&docs)
        .map(|(d, s)| ThetaTrue {
            doc_id: &d.doc_id,
            theta: &s.theta_true,
            dominant_topic: s.dominant_topic(),
        })
        .collect();
    write_jsonl(&args.out.join("theta_true.jsonl"), &rows)?;
    let truth = PlantedTruth {
        topic_mu: mu.rows().into_iter().map(|r| r.to_vec()).collect(),
        topic_var: args.topic_var,
        alpha: args.alpha,
        word_topic,
        dominant_topic: docs.iter().map(|s| s.dominant_topic()).collect(),
    };
    write_json(&args.out.join("truth.json"), &truth)?;
    record_config(&args.out, "synth", args)?;
    Ok(truth)
}
