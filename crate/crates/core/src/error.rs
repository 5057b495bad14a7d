use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty realization")]
    EmptyRealization,

    #[error("grid frame mismatch: {0}")]
    FrameMismatch(String),

    #[error("viewpoint id {0} out of range 0..=12")]
    InvalidViewpoint(u32),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("camera lies inside the grid's bounding sphere (no valid near plane)")]
    CameraInsideGrid,

    #[error("empty level set at iso {0}")]
    EmptyLevelSet(f32),

    #[error("open mesh: {0} boundary edges")]
    OpenMesh(usize),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("tensor shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Diverged { iteration: usize, loss: f32 },

    #[error("no usable shapes")]
    NoShapes,

    #[error("no prediction yet")]
    NoPrediction,

    #[error("session capacity of {0} reached; retry after closing a session")]
    Capacity(usize),

    #[error("unknown session {0}")]
    UnknownSession(String),

    #[error("rejected: {0}")]
    Rejected(String),

    #[error("malformed {kind}: {msg}")]
    Format { kind: &'static str, msg: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(kind: &'static str, msg: impl Into<String>) -> Self {
        Error::Format { kind, msg: msg.into() }
    }

    /// Attaches the offending path to an error raised while handling a file.
    pub fn at(self, path: impl Into<PathBuf>) -> Self {
        Error::File { path: path.into(), source: Box::new(self) }
    }
}

impl From<png::DecodingError> for Error {
    fn from(e: png::DecodingError) -> Self {
        Error::format("png", e.to_string())
    }
}

impl From<png::EncodingError> for Error {
    fn from(e: png::EncodingError) -> Self {
        Error::format("png", e.to_string())
    }
}
