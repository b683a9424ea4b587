use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("symbol {symbol} is outside the {scheme} alphabet of size {alphabet}")]
    SymbolOutOfAlphabet {
        scheme: &'static str,
        symbol: usize,
        alphabet: usize,
    },
    #[error("payload too short: need {needed} symbols, got {got}")]
    PayloadTooShort { needed: usize, got: usize },
    #[error("sample rate {sample_rate_hz} Hz violates Nyquist for highest frequency {max_hz} Hz")]
    Nyquist { sample_rate_hz: f64, max_hz: f64 },
    #[error("invalid modulation scheme: {0}")]
    InvalidScheme(String),
    #[error("invalid emitter profile: {0}")]
    InvalidProfile(String),
    #[error("frame has zero power")]
    ZeroPower,
    #[error("no pulse detected (peak/median ratio {ratio:.3} below threshold {threshold})")]
    NoPulse { ratio: f64, threshold: f64 },
    #[error("invalid dataset request: {0}")]
    InvalidDataset(String),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("index {index} out of range for {count} classes")]
    ClassOutOfRange { index: usize, count: usize },
    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("invalid model config: {0}")]
    InvalidModel(String),
    #[error("invalid training config: {0}")]
    InvalidTrain(String),
    #[error("source dataset contains unlabeled frames")]
    UnlabeledSource,
    #[error("target training split carries labels; refusing to train on leaked labels")]
    TargetLabelsPresent,

    #[error("{path}: line {line}: {msg}")]
    Config {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("bad file format: {0}")]
    Format(String),
    #[error("incompatible checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
