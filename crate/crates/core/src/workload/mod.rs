//! Datasets, replay and benchmarks.

pub mod bench;
pub mod datasets;
pub mod replay;
pub mod sqlite;
pub mod suites;

use thiserror::Error;

use crate::db::DbError;
use crate::ingest::pipeline::IngestError;
use crate::query::QueryError;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("sqlite: {0}")]
    Sqlite(#[from] rusqlite::Error),
}
