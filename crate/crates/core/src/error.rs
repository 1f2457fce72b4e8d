use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument was outside its documented range.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Configuration text could not be parsed.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A density was requested from a measure that only has point masses.
    #[error("measure is atomic in the requested variables; use cell masses instead of densities")]
    AtomicMeasure,

    /// Hypothesis checks only apply to hidden-variable models.
    #[error("not a hidden-variable model")]
    NotHiddenVariableModel,

    /// Two-plane operations need orthogonal plane normals.
    #[error("plane normals are not orthogonal: |p.p'| = {0:.3e}")]
    PlanesNotOrthogonal(f64),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }
}
