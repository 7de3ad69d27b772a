use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("non-triangle face at index {face}")]
    NonTriangleFace { face: usize },

    #[error("empty geometry")]
    EmptyGeometry,

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is a reflection (determinant {0})")]
    Reflection(f64),

    #[error("registration produced a non-finite loss")]
    NonFiniteLoss,

    #[error("samples are all identical; encode the vector through the constant shortcut path")]
    DegenerateSamples,

    #[error("truncated stream at byte {offset}")]
    Truncated { offset: usize },

    #[error("corrupt stream at byte {offset}: {msg}")]
    Corrupt { offset: usize, msg: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn corrupt(offset: usize, msg: impl Into<String>) -> Self {
        Error::Corrupt {
            offset,
            msg: msg.into(),
        }
    }
}
