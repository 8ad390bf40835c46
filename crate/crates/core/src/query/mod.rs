//! Read-only query side: constraint planning, cursors, SQL and callbacks.

pub mod callbacks;
pub mod cursor;
pub mod plan;
pub mod prefetch;
pub mod sql;
pub mod table;

use thiserror::Error;

use crate::store::StoreError;

pub use cursor::{open_cursor, CombineMode, Cursor, CursorOptions};
pub use plan::{best_index, Constraint, QueryPlan};
pub use prefetch::{prefetch, PrefetchCache};
pub use sql::{execute_sql, Catalog, QueryResult};
pub use table::{Column, LogicalTable};

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unknown column: {0}")]
    UnknownColumn(String),
    #[error("unknown table: {0}")]
    UnknownTable(String),
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("{0}")]
    Eval(String),
    #[error("cursor is past its last row")]
    Eof,
    #[error(transparent)]
    Store(#[from] StoreError),
}
