//! A database directory: the schema document plus one store and one index
//! snapshot per partition.
//!
//! ```text
//! <dir>/schema.cfg
//! <dir>/p0.ltss  <dir>/p0.idx
//! <dir>/p1.ltss  <dir>/p1.idx  ...
//! ```
//!
//! The partition count is the schema's `pipelines` setting and each
//! partition holds `capacity_records` records.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::index::{load_or_rebuild, IndexError, IndexWriter};
use crate::partition::{Partition, PartitionReader};
use crate::query::callbacks::CallbackRegistry;
use crate::schema::{parse_schema, Schema, SchemaError};
use crate::store::{self, StoreError, StoreOptions};

pub const SCHEMA_FILE: &str = "schema.cfg";

#[derive(Debug, Error)]
pub enum DbError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("{0}")]
    Layout(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DbError + '_ {
    move |source| DbError::Io { path: path.to_path_buf(), source }
}

pub fn store_path(dir: &Path, partition: usize) -> PathBuf {
    dir.join(format!("p{partition}.ltss"))
}

pub fn index_path(dir: &Path, partition: usize) -> PathBuf {
    dir.join(format!("p{partition}.idx"))
}

/// Catalog entry for one table: everything a query needs.
#[derive(Clone)]
pub struct Table {
    pub schema: Arc<Schema>,
    pub partitions: Vec<PartitionReader>,
    pub callbacks: Arc<CallbackRegistry>,
}

impl Table {
    pub fn name(&self) -> &str {
        self.schema.name()
    }

    /// Live records across all partitions.
    pub fn live_records(&self) -> u64 {
        self.partitions.iter().map(|p| {
            let w = p.store.live_window();
            w.end - w.start
        }).sum()
    }
}

pub struct Database {
    dir: PathBuf,
    schema: Arc<Schema>,
    callbacks: Arc<CallbackRegistry>,
    readers: Vec<PartitionReader>,
}

impl Database {
    /// Creates a new database in `dir` (created if missing; existing store
    /// files are replaced). Returns the partition writers for the caller to
    /// hand to sorter threads.
    pub fn create(dir: impl AsRef<Path>, schema: &Schema, opts: StoreOptions) -> Result<(Database, Vec<Partition>), DbError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let cfg = dir.join(SCHEMA_FILE);
        fs::write(&cfg, schema.to_config()).map_err(io_err(&cfg))?;
        let n = schema.settings.pipelines.max(1);
        if n > usize::from(u16::MAX) {
            return Err(DbError::Layout(format!("{n} partitions is more than supported")));
        }
        let callbacks = CallbackRegistry::new();
        let mut parts = Vec::with_capacity(n);
        for i in 0..n {
            let _ = fs::remove_file(index_path(dir, i));
            let st = store::create_store(store_path(dir, i), schema, schema.settings.capacity_records, opts)?;
            parts.push(Partition::new(i as u16, st, IndexWriter::new(), index_path(dir, i), callbacks.clone()));
        }
        Ok(Self::assemble(dir, Arc::new(schema.clone()), callbacks, parts))
    }

    /// Reopens an existing database for writing, recovering every store
    /// from its newest valid metadata and reloading (or rebuilding) indexes.
    pub fn open(dir: impl AsRef<Path>, opts: StoreOptions) -> Result<(Database, Vec<Partition>), DbError> {
        let dir = dir.as_ref();
        let schema = read_schema(dir)?;
        let callbacks = CallbackRegistry::new();
        let mut parts = Vec::new();
        for i in 0..schema.settings.pipelines.max(1) {
            let st = store::recover_with_schema(store_path(dir, i), &schema, opts)?;
            let (idx, rebuilt) = load_or_rebuild(&index_path(dir, i), &st.reader())?;
            if rebuilt {
                log::info!("partition {i}: index rebuilt from store");
            }
            parts.push(Partition::new(i as u16, st, idx, index_path(dir, i), callbacks.clone()));
        }
        Ok(Self::assemble(dir, Arc::new(schema), callbacks, parts))
    }

    /// Opens a point-in-time, read-only view (safe while another process
    /// is writing).
    pub fn open_read_only(dir: impl AsRef<Path>) -> Result<Database, DbError> {
        let dir = dir.as_ref();
        let schema = Arc::new(read_schema(dir)?);
        let mut readers = Vec::new();
        for i in 0..schema.settings.pipelines.max(1) {
            let st = store::open_read_only(store_path(dir, i))?;
            if st.schema().layout_hash() != schema.layout_hash() {
                return Err(StoreError::SchemaMismatch { stored: st.schema().layout_hash(), expected: schema.layout_hash() }.into());
            }
            let (idx, _) = load_or_rebuild(&index_path(dir, i), &st)?;
            readers.push(PartitionReader { id: i as u16, store: st, index: idx.reader() });
        }
        Ok(Database { dir: dir.to_path_buf(), schema, callbacks: CallbackRegistry::new(), readers })
    }

    fn assemble(dir: &Path, schema: Arc<Schema>, callbacks: Arc<CallbackRegistry>, parts: Vec<Partition>) -> (Database, Vec<Partition>) {
        let readers = parts.iter().map(|p| p.reader()).collect();
        (Database { dir: dir.to_path_buf(), schema, callbacks, readers }, parts)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn callbacks(&self) -> &Arc<CallbackRegistry> {
        &self.callbacks
    }

    pub fn partitions(&self) -> &[PartitionReader] {
        &self.readers
    }

    pub fn table(&self) -> Table {
        Table { schema: self.schema.clone(), partitions: self.readers.clone(), callbacks: self.callbacks.clone() }
    }
}

pub fn read_schema(dir: &Path) -> Result<Schema, DbError> {
    let cfg = dir.join(SCHEMA_FILE);
    let text = fs::read_to_string(&cfg).map_err(io_err(&cfg))?;
    Ok(parse_schema(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctime::MIN_EPOCH_MICROS;
    use crate::store::SyncPolicy;
    use crate::value::Value;

    fn schema() -> Schema {
        let mut s = parse_schema("schema m\nfield t time\nfield v u32\nprimary_time t\ncapacity_records 100\npipelines 2\n").unwrap();
        s.settings.capacity_records = 100;
        s
    }

    fn rec(s: &Schema, t: u64) -> Vec<u8> {
        let wire = s.encode(&[Value::Int((MIN_EPOCH_MICROS + t) as i64), Value::Int(t as i64)]).unwrap();
        let mut out = vec![0; s.record_size()];
        s.decode_into(&wire, &mut out).unwrap();
        out
    }

    #[test]
    fn create_commit_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let s = schema();
        let opts = StoreOptions { sync: SyncPolicy::Never, ..Default::default() };
        let (db, mut parts) = Database::create(dir.path(), &s, opts).unwrap();
        assert_eq!(parts.len(), 2);
        parts[0].commit(&[rec(&s, 1), rec(&s, 2)]).unwrap();
        parts[1].commit(&[rec(&s, 3)]).unwrap();
        assert_eq!(db.table().live_records(), 3);
        assert_eq!(db.callbacks().inserted(), 3);
        assert_eq!(db.partitions()[0].index.load().narrow(&[]), vec![0..2]);
        for p in parts {
            p.close().unwrap();
        }
        let ro = Database::open_read_only(dir.path()).unwrap();
        assert_eq!(ro.table().live_records(), 3);
        let (db2, mut parts2) = Database::open(dir.path(), opts).unwrap();
        parts2[1].commit(&[rec(&s, 4)]).unwrap();
        assert_eq!(db2.partitions()[1].index.load().narrow(&[]), vec![0..2]);
    }

    #[test]
    fn missing_dir_is_an_error() {
        assert!(matches!(Database::open("/nonexistent/db", StoreOptions::default()), Err(DbError::Io { .. })));
    }
}
