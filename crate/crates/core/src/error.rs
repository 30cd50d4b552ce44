use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("frame {frame} out of range 1..={n_frames}")]
    FrameOutOfRange { frame: u32, n_frames: u32 },

    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("scale component {0} is too small to form a ratio")]
    DivisionDegenerate(f64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("no neighborhood intersected any sampled line; increase n_rays")]
    NoAnchorsProduced,

    #[error("anchor set is empty")]
    EmptyAnchorSet,

    #[error("non-finite loss at step {step} (frame {frame}, view {view})")]
    NonFiniteLoss { step: usize, frame: u32, view: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{}: {source}", path.display())]
    FileAccess {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image encoding: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::FileAccess {
            path: path.into(),
            source,
        }
    }
}
