use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("invalid label schema: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("reject budget exceeded in {path}: {unparseable} unparseable rows of {total} (budget {budget})")]
    RejectBudget {
        path: String,
        unparseable: usize,
        total: usize,
        budget: usize,
    },

    #[error("vocabulary target size {target} is below the byte floor {floor}")]
    VocabTooSmall { target: usize, floor: usize },

    #[error("corrupt token sequence: id {id} outside vocabulary of {size}")]
    CorruptSequence { id: u32, size: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite activation in {0}")]
    NonFinite(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
