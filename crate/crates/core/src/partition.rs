//! One data partition: a record store, its directory index and the hooks
//! that run when a sorted batch is committed.

use std::path::PathBuf;
use std::sync::Arc;

use crate::ctime::{CompositeTime, EpochMicros};
use crate::db::DbError;
use crate::index::{IndexReader, IndexWriter};
use crate::query::callbacks::CallbackRegistry;
use crate::schema::Schema;
use crate::store::{StoreReader, StoreWriter};

/// Default number of committed batches between index snapshots.
pub const SNAPSHOT_EVERY_BATCHES: u64 = 1024;

/// Read handles for one partition; cheap to clone and share across threads.
#[derive(Clone)]
pub struct PartitionReader {
    pub id: u16,
    pub store: StoreReader,
    pub index: IndexReader,
}

impl PartitionReader {
    pub fn schema(&self) -> &Arc<Schema> {
        self.store.schema()
    }
}

/// Write side of a partition, owned by one sorter thread.
pub struct Partition {
    id: u16,
    store: StoreWriter,
    index: IndexWriter,
    idx_path: PathBuf,
    snapshot_every: u64,
    batches: u64,
    callbacks: Arc<CallbackRegistry>,
    time_offset: usize,
}

impl Partition {
    pub(crate) fn new(id: u16, store: StoreWriter, index: IndexWriter, idx_path: PathBuf, callbacks: Arc<CallbackRegistry>) -> Self {
        let time_offset = store.schema().time_field().offset;
        Partition { id, store, index, idx_path, snapshot_every: SNAPSHOT_EVERY_BATCHES, batches: 0, callbacks, time_offset }
    }

    pub fn id(&self) -> u16 {
        self.id
    }

    pub fn set_snapshot_every(&mut self, batches: u64) {
        self.snapshot_every = batches.max(1);
    }

    pub fn reader(&self) -> PartitionReader {
        PartitionReader { id: self.id, store: self.store.reader(), index: self.index.reader() }
    }

    pub fn store(&self) -> &StoreWriter {
        &self.store
    }

    pub fn index(&self) -> &IndexWriter {
        &self.index
    }

    /// Appends a time-sorted batch of stored-form records, indexes it,
    /// publishes it to readers and fires update callbacks. Returns the
    /// sequence number of the first record.
    pub fn commit<R: AsRef<[u8]>>(&mut self, batch: &[R]) -> Result<u64, DbError> {
        if batch.is_empty() {
            return Ok(self.store.state().total);
        }
        let first = self.store.append_batch(batch)?;
        let toff = self.time_offset;
        let mut last = CompositeTime::from_bits(0);
        for (i, r) in batch.iter().enumerate() {
            let b = r.as_ref();
            last = CompositeTime::from_le_bytes(b[toff..toff + 8].try_into().unwrap());
            self.index.append(first + i as u64, last)?;
        }
        self.index.set_live_start(self.store.state().live_start);
        self.index.publish();
        self.batches += 1;
        if self.batches % self.snapshot_every == 0 {
            self.snapshot()?;
        }
        self.callbacks.on_commit(self.id, batch.len(), EpochMicros(last.epoch_unchecked()));
        Ok(first)
    }

    pub fn snapshot(&self) -> Result<(), DbError> {
        self.index.write_snapshot(&self.idx_path, self.store.schema().layout_hash())?;
        Ok(())
    }

    /// Flushes the index snapshot; the store is already durable per batch
    /// (or as durable as its sync policy makes it).
    pub fn close(self) -> Result<(), DbError> {
        self.snapshot()
    }
}
