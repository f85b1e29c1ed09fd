use std::path::PathBuf;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("power op: negative base {base} with fractional exponent {exponent}")]
    NegativeBase { base: f64, exponent: f64 },

    #[error("backward requires a scalar loss of shape [1], got {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite {phase} loss at outer iteration {iteration} ({detail})")]
    Diverged {
        phase: &'static str,
        iteration: usize,
        detail: String,
    },

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::File {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
