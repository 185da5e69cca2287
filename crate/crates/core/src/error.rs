use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("load error{}: {message}", record.map(|r| format!(" at record {r}")).unwrap_or_default())]
    Load {
        record: Option<usize>,
        message: String,
    },

    #[error("non-finite value in parameter `{param}`")]
    NonFinite { param: String },

    #[error("training aborted: non-finite loss at epoch {epoch} (lr = {lr})")]
    TrainingAbort { epoch: usize, lr: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("unsupported dataset: {0}")]
    Unsupported(String),

    #[error("incompatible datasets: {0}")]
    Incompatible(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn load(record: impl Into<Option<usize>>, message: impl Into<String>) -> Self {
        Error::Load {
            record: record.into(),
            message: message.into(),
        }
    }
}
