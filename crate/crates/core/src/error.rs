//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
    #[error("audio: {0}")]
    Audio(String),
    #[error("alignment parse: {0}")]
    AlignmentParse(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("augment: {0}")]
    Augment(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("model format: {0}")]
    ModelFormat(String),
    #[error("training: {0}")]
    Training(String),
    #[error("evaluation: {0}")]
    Eval(String),
    #[error("streaming: {0}")]
    Streaming(String),
    #[error("config: {0}")]
    Config(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
