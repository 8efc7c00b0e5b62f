use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error at row {row}, column '{column}': {message}")]
    Data {
        row: usize,
        column: String,
        message: String,
    },

    #[error("bias model syntax error at position {position}: {message}")]
    Dsl { position: usize, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("bias set too large: about {estimate} members exceeds cap {cap}")]
    CapExceeded { estimate: u128, cap: u128 },

    #[error("{0}")]
    Invalid(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
