use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("problem of size {rows}x{cols} exceeds the exact oracle cap {max_rows}x{max_cols}")]
    OracleTooLarge {
        rows: usize,
        cols: usize,
        max_rows: usize,
        max_cols: usize,
    },

    #[error("exact oracle did not terminate within {0} pivots")]
    OracleStalled(usize),

    #[error("row {0} of the transport plan has zero mass")]
    ZeroRowMass(usize),

    #[error("{targets} targets cannot be matched to {predictions} predictions")]
    TooManyTargets { targets: usize, predictions: usize },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("evaluation set is empty")]
    EmptyEvalSet,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }
}
