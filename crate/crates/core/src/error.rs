use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the segmentation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid array geometry: {0}")]
    Geometry(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("signal too short: {got} samples, need at least {need}")]
    SignalTooShort { got: usize, need: usize },

    #[error("unsupported sample rate {0} Hz (expected 16000 Hz, no resampling is performed)")]
    SampleRate(u32),

    #[error("need at least {need} active microphones, got {got}")]
    TooFewMicrophones { got: usize, need: usize },

    #[error("microphone pair ({0}, {1}) is not available in the active array")]
    InactivePair(usize, usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite gradient in {tensor}")]
    NonFiniteGradient { tensor: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{path}:{line}: malformed RTTM line: {reason}")]
    Rttm { path: PathBuf, line: usize, reason: String },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("WAV error: {0}")]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
