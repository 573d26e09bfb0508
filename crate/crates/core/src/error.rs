use std::path::PathBuf;

use crate::seqmodel::Model;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller supplied values outside an operation's domain.
    #[error("input error: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    /// A dataset lacks a field an operation needs (paraphrase, idk answer, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("unknown {kind} key `{key}`{suggestion}; valid keys: {valid}")]
    Lookup {
        kind: String,
        key: String,
        suggestion: String,
        valid: String,
    },

    #[error("non-finite loss at step {step} ({stage})")]
    NonFinite { step: usize, stage: String },

    /// Unlearning diverged; the last parameters with a finite loss are kept.
    #[error("training diverged at step {step}; last stable checkpoint retained")]
    Diverged { step: usize, last_stable: Box<Model> },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Yaml(#[from] serde_yaml::Error),
}

impl Error {
    /// Unknown-key error listing the valid keys and the closest one.
    pub fn lookup<'a>(kind: &str, key: &str, valid: impl IntoIterator<Item = &'a str>) -> Self {
        let valid: Vec<&str> = valid.into_iter().collect();
        let suggestion = valid
            .iter()
            .map(|v| (strsim::jaro_winkler(key, v), *v))
            .filter(|(score, _)| *score > 0.7)
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, v)| format!(" (did you mean `{v}`?)"))
            .unwrap_or_default();
        Error::Lookup {
            kind: kind.to_string(),
            key: key.to_string(),
            suggestion,
            valid: valid.join(", "),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! input_err {
    ($($arg:tt)*) => { $crate::error::Error::Input(format!($($arg)*)) };
}
macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(format!($($arg)*)) };
}
macro_rules! data_err {
    ($($arg:tt)*) => { $crate::error::Error::Data(format!($($arg)*)) };
}
pub(crate) use {config_err, data_err, input_err};
