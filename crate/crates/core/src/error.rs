use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{records} records but {labels} labels")]
    CountMismatch { records: usize, labels: usize },

    #[error("labels need at least one correct and one wrong hypothesis (got {correct} correct of {total})")]
    DegenerateLabels { correct: usize, total: usize },

    #[error("length mismatch: {what} (expected {expected}, got {got})")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid {name}: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("no embedding for sample {sample_id:?} hypothesis {hypothesis_index}")]
    MissingEmbedding { sample_id: String, hypothesis_index: usize },

    #[error("AUC undefined: scores contain only one class")]
    SingleClass,

    #[error("non-finite loss at step {step} on sample {sample_id:?}")]
    Diverged { step: u64, sample_id: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}
