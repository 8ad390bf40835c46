//! The SQL subset: SELECT with expressions, aggregates, DISTINCT, WHERE,
//! GROUP BY, ORDER BY, LIMIT, single-level WITH and IN (subquery).

pub mod ast;
mod eval;
pub mod lexer;
pub mod parser;

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use crate::db::{Database, Table};
use crate::value::Value;

use super::cursor::CombineMode;
use super::prefetch::PrefetchCache;
use super::QueryError;

pub use eval::execute_statement;
pub use parser::parse;

/// Tables visible to queries, by case-insensitive name.
#[derive(Clone, Default)]
pub struct Catalog {
    tables: HashMap<String, Table>,
}

impl Catalog {
    pub fn new() -> Self {
        Catalog::default()
    }

    /// Registers a table under its schema name.
    pub fn add(&mut self, table: Table) {
        let name = table.name().to_string();
        self.add_as(&name, table);
    }

    pub fn add_as(&mut self, name: &str, table: Table) {
        self.tables.insert(name.to_ascii_lowercase(), table);
    }

    pub fn from_database(db: &Database) -> Self {
        let mut c = Catalog::new();
        c.add(db.table());
        c
    }

    pub fn get(&self, name: &str) -> Option<&Table> {
        self.tables.get(&name.to_ascii_lowercase())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }
}

#[derive(Clone, Default)]
pub struct ExecOptions {
    /// Read partitions on separate threads.
    pub parallel: bool,
    pub cache: Option<Arc<PrefetchCache>>,
    /// Overrides the combine mode chosen per statement.
    pub combine: Option<CombineMode>,
    /// Evaluate every predicate per record instead of narrowing through
    /// the directory index (for comparisons and testing).
    pub no_pushdown: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    /// Base-table records read after index narrowing and residual filters.
    pub scanned: u64,
}

impl QueryResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for r in &self.rows {
            out.write_record(r.iter().map(|v| v.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("values are UTF-8")
    }

    /// The single value of a one-row, one-column result.
    pub fn scalar(&self) -> Option<&Value> {
        match (self.rows.len(), self.columns.len()) {
            (1, 1) => Some(&self.rows[0][0]),
            _ => None,
        }
    }
}

pub fn execute_sql(sql: &str, catalog: &Catalog) -> Result<QueryResult, QueryError> {
    execute_sql_with(sql, catalog, &ExecOptions::default())
}

pub fn execute_sql_with(sql: &str, catalog: &Catalog, opts: &ExecOptions) -> Result<QueryResult, QueryError> {
    let st = parse(sql)?;
    execute_statement(&st, catalog, opts)
}
