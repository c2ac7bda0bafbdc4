use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid color code {0:?}")]
    InvalidCode(String),

    #[error("invalid color {0:?}")]
    InvalidColor(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("element {0:?} not found")]
    ElementNotFound(String),

    #[error("element {id:?} is {kind}, expected {expected}")]
    WrongElementKind {
        id: String,
        kind: String,
        expected: &'static str,
    },

    #[error("image: {0}")]
    Image(String),

    #[error("invalid sequence: {0}")]
    Sequence(String),

    #[error("masking: {0}")]
    Masking(String),

    #[error("invalid slot {slot}: {reason}")]
    InvalidSlot { slot: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
