use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cell ({t},{u}) is outside the {n}x{n} grid")]
    CellOutOfBounds { t: usize, u: usize, n: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot resolve component: {0}")]
    Resolution(String),

    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("oracle refused: {candidates} candidate programs exceed the budget of {budget}")]
    Budget { candidates: u128, budget: u128 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("malformed corpus entry `{instance}`: {message}")]
    Corpus { instance: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, field: &str, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            field: field.to_string(),
            message: message.into(),
        }
    }
}
