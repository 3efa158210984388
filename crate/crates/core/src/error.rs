use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("no negatives available: {0}")]
    NoNegatives(String),

    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),

    #[error("learning-rate schedule exhausted: step {step} > total {total}")]
    ScheduleExhausted { step: usize, total: usize },

    #[error("invalid config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
