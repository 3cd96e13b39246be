use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },

    #[error("matrix is singular after diagonal loading (batch index {index})")]
    Singular { index: usize },

    #[error("MVDR trace normalizer is near zero at frequency {freq} (|Tr| = {magnitude:e})")]
    DegenerateTrace { freq: usize, magnitude: f64 },

    #[error("backward requires a scalar root, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },

    #[error("CTC: label sequence of length {labels} is not admissible for {frames} frames")]
    CtcInadmissible { frames: usize, labels: usize },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("channel count {got} does not match the {expected} channels this model was built for")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        detail: detail.into(),
    }
}
