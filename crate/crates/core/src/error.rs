use std::path::PathBuf;

/// Errors raised by the recognizer library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("manifest schema violation at {location}: {message}")]
    Schema { location: String, message: String },

    #[error("invalid bounding box for {location}: {message}")]
    BoundingBox { location: String, message: String },

    #[error("symbol {0:?} is not in the character set")]
    UnknownSymbol(char),

    #[error("label id {id} is out of range for a character set of {size} symbols")]
    LabelOutOfRange { id: usize, size: usize },

    #[error("the blank label may not appear in a target sequence")]
    BlankInTarget,

    #[error("target of length {target_len} with {repeats} adjacent repeats needs {needed} frames, only {frames} available (target too long for T)")]
    TargetTooLong {
        target_len: usize,
        repeats: usize,
        needed: usize,
        frames: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("enumeration bound exceeded: {0}")]
    TooLarge(String),

    #[error("character set mismatch: {0}")]
    CharsetMismatch(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("non-finite loss in batch {batch} of epoch {epoch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
