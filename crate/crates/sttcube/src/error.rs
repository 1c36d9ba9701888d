//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("taxonomy: {0}")]
    Taxonomy(String),

    #[error("schema: {0}")]
    Schema(String),

    #[error("config: {0}")]
    Config(String),

    #[error("query: {0}")]
    Query(String),

    #[error("persist: {0}")]
    Persist(String),

    #[error("bench: {0}")]
    Bench(String),
}

pub type Result<T> = std::result::Result<T, Error>;
