//! Command-line pipeline: preprocess → init → train → topics / infer → eval,
//! plus `synth` for planted-topic corpora.

mod args;
mod commands;
mod error;
mod files;
mod synth;

pub use args::{
    Cli, Command, EncoderArg, EvalArgs, InferArgs, InitArgs, PreprocessArgs, SynthArgs, TopicsArgs, TrainArgs,
};
pub use commands::{
    cmd_eval, cmd_infer, cmd_init, cmd_preprocess, cmd_topics, cmd_train, InitOutput, MetricsFile, TopicEntry, TopicWord,
    TopicsFile,
};
pub use error::CliError;
pub use synth::{cmd_synth, PlantedTruth};

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        // A pool that already exists (e.g. a second call in-process) is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Preprocess(a) => cmd_preprocess(&a),
        Command::Synth(a) => cmd_synth(&a).map(|_| ()),
        Command::Init(a) => cmd_init(&a).map(|out| {
            for (k, words) in out.top_words.iter().enumerate() {
                println!("topic {k}: {}", words.join(" "));
            }
        }),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Topics(a) => cmd_topics(&a).map(|_| ()),
        Command::Infer(a) => cmd_infer(&a).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
    }
}
