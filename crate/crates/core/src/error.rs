use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures of the external scoring channel. Each kind is distinct so the
/// tracker can report why a sequence was aborted.
#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("no response within {0:?}")]
    Timeout(std::time::Duration),
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("connection closed by peer")]
    Closed,
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("service error for request {id}: {message}")]
    Remote { id: u64, message: String },
    #[error("response id {got} does not match request id {expected}")]
    IdMismatch { expected: u64, got: u64 },
    #[error("transport: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix not numerically positive definite even with jitter {jitter:e}; increase gp.noise")]
    NotPositiveDefinite { jitter: f64 },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("degenerate search grid: {0}")]
    DegenerateGrid(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("oracle failure: {0}")]
    Oracle(#[from] ProtocolError),
    #[error("missing ground truth file {0}")]
    MissingGroundTruth(PathBuf),
    #[error("sequence has {frames} frames but {boxes} ground-truth boxes")]
    CountMismatch { frames: usize, boxes: usize },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn ensure_finite(value: f64, what: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(what))
    }
}
