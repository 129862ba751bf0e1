use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid category: {0}")]
    InvalidCategory(String),

    #[error("invalid element: {0}")]
    InvalidElement(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("asset dimensions mismatch: canvas {canvas_w}x{canvas_h}, asset {asset_w}x{asset_h}")]
    AssetDimensionsMismatch {
        canvas_w: u32,
        canvas_h: u32,
        asset_w: u32,
        asset_h: u32,
    },

    #[error("saliency required")]
    SaliencyRequired,

    #[error("cannot perturb empty layout")]
    EmptyPerturbInput,

    #[error("mixing threshold must be in [0,1], got {0}")]
    InvalidEpsilon(f64),

    #[error("empty candidate list")]
    EmptyCandidates,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("no layout found in response")]
    NoLayoutFound,

    #[error("markup parse error: {0}")]
    Markup(String),

    #[error("unknown category {name:?} not in taxonomy")]
    UnknownCategory { name: String },

    #[error("constraint violation: missing {missing:?}, extra {extra:?}")]
    ConstraintViolation {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    #[error("endpoint error after {attempts} attempt(s): {message}")]
    Endpoint { message: String, attempts: u32 },

    #[error("retries exhausted after {} attempt(s)", log.len())]
    RetriesExhausted { log: Vec<AttemptRecord> },

    #[error("background image required for this backend")]
    BackgroundRequired,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    FileFormat { path: PathBuf, message: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

/// One failed request attempt against an external endpoint.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub detail: String,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn file(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::FileFormat {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
