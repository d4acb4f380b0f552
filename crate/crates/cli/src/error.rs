use std::fmt::{Debug, Display};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Exit code 1 for errors raised by a library module, 2 for bad flags and I/O.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{message}")]
    Module { code: String, message: String },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &Path, err: impl Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub fn module(code: &str, msg: impl Into<String>) -> Self {
        CliError::Module {
            code: code.to_string(),
            message: msg.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Module { .. } => 1,
            CliError::Config(_) | CliError::Io { .. } => 2,
        }
    }

    pub fn code(&self) -> &str {
        match self {
            CliError::Config(_) => "Config",
            CliError::Io { .. } => "Io",
            CliError::Module { code, .. } => code,
        }
    }

    /// `ERR <code>: <message>` on a single line.
    pub fn line(&self) -> String {
        format!("ERR {}: {}", self.code(), self.to_string().replace('\n', " "))
    }
}

/// Innermost enum variant named in a `Debug` rendering, e.g.
/// `Checkpoint(ShapeMismatch("..."))` gives `ShapeMismatch`.
fn innermost_variant(debug: &str) -> (String, bool) {
    let mut code = String::new();
    let mut saw_io = false;
    let mut rest = debug;
    loop {
        let ident: String = rest.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
        if ident.is_empty() {
            break;
        }
        if ident == "Io" {
            saw_io = true;
        }
        code = ident.clone();
        rest = &rest[ident.len()..];
        if let Some(r) = rest.strip_prefix('(') {
            rest = r;
        } else {
            break;
        }
    }
    (code, saw_io)
}

pub(crate) fn from_module<E: Debug + Display>(err: E) -> CliError {
    let (code, saw_io) = innermost_variant(&format!("{err:?}"));
    if saw_io {
        return CliError::Io {
            path: PathBuf::new(),
            message: err.to_string(),
        };
    }
    CliError::module(&code, err.to_string())
}

macro_rules! module_errors {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                from_module(e)
            }
        })*
    };
}

module_errors!(
    tntm::corpus::CorpusError,
    tntm::tensorio::TensorIoError,
    tntm::numkernel::NumError,
    tntm::gmm::GmmError,
    tntm::model::ModelError,
    tntm::model::TopicError,
    tntm::train::TrainError,
    tntm::metrics::MetricsError
);
