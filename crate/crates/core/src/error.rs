use thiserror::Error;

#[derive(Debug, Error)]
pub enum VampError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numerical failure at index {index}: {message}")]
    Numerical { index: usize, message: String },

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<VampError>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl VampError {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        VampError::Iteration {
            iteration,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, VampError>;

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(VampError::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}
