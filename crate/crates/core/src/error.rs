use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Tensor(#[from] d2it_tensor::TensorError),

    #[error("{op}: image extents {h}x{w} not divisible by {factor}")]
    Divisibility {
        op: &'static str,
        h: usize,
        w: usize,
        factor: usize,
    },

    #[error("{op}: expected {expected} channels, got {got}")]
    Channels {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },

    #[error("calibration corpus is empty")]
    EmptyCorpus,

    #[error("missing prerequisite artifact for stage `{stage}`: {what} (run `{hint}` first)")]
    MissingStage {
        stage: String,
        what: String,
        hint: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl From<std::io::Error> for CoreError {
    fn from(e: std::io::Error) -> Self {
        CoreError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CoreError {
    fn from(e: serde_json::Error) -> Self {
        CoreError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
