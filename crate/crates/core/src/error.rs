use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed annotation at line {line}: expected `<video_id> <caption>`")]
    MalformedLine { line: usize },

    #[error("translation failed for video {video_id}: {reason}")]
    TranslationFailed { video_id: String, reason: String },

    #[error("no cached translation for video {video_id} (offline mode)")]
    MissingTranslation { video_id: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid token id {id} for vocabulary of size {size}")]
    InvalidId { id: usize, size: usize },

    #[error("video {video_id} has no frames")]
    EmptyVideo { video_id: String },

    #[error("cannot decode video {video_id}: {reason}")]
    Decode { video_id: String, reason: String },

    #[error("unknown backbone `{0}`")]
    UnknownBackbone(String),

    #[error("backbone `{name}` unavailable: {reason}")]
    BackboneUnavailable { name: String, reason: String },

    #[error("no cached features for video {video_id} with backbone {backbone}")]
    CacheMiss { video_id: String, backbone: String },

    #[error("corrupt feature cache {}: {reason}", path.display())]
    CorruptCache { path: PathBuf, reason: String },

    #[error("missing features for {} video(s): {}", .0.len(), .0.join(", "))]
    MissingFeatures(Vec<String>),

    #[error("shape mismatch on {axis}: expected {expected}, found {found}")]
    Shape {
        axis: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },

    #[error("checkpoint was trained with vocabulary {expected}, got {found}")]
    IncompatibleVocab { expected: String, found: String },

    #[error("cannot score an empty corpus")]
    EmptyCorpus,

    #[error("all {0} grid runs failed")]
    GridFailed(usize),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
