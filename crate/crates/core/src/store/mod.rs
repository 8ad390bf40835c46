//! Append-only, time-ordered record log with rolling block metadata.
//!
//! Records are addressed by a 64-bit sequence number assigned at append
//! time; the physical slot is `seq % capacity`. Once more than `capacity`
//! records have been appended the oldest are overwritten (roll-around), so
//! the live window is `[total - capacity, total)`.
//!
//! There is a single writer ([`StoreWriter`]) and any number of readers
//! ([`StoreReader`]). Readers never block the writer: before overwriting
//! slots the writer publishes how far it is about to write, and a reader
//! re-validates every sequence number after copying its bytes.

pub mod layout;

use std::fs::{File, OpenOptions};
use std::io::{self, IoSlice};
use std::ops::Range;
use std::os::unix::fs::{FileExt, FileTypeExt};
use std::os::unix::io::AsRawFd;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering::SeqCst};
use std::sync::Arc;

use thiserror::Error;

use crate::ctime::CompositeTime;
use crate::schema::{parse_schema, Schema, SchemaError};
use layout::{BlockMetadata, Header, BLOCK};

pub use layout::DEFAULT_ROLLING_COUNT;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O: {0}")]
    Io(#[from] io::Error),
    #[error("bad store header: {0}")]
    BadHeader(String),
    #[error("no checksum-valid metadata copy found")]
    NoValidMetadata,
    #[error("schema hash mismatch: store has {stored:#010x}, expected {expected:#010x}")]
    SchemaMismatch { stored: u32, expected: u32 },
    #[error("schema in store header: {0}")]
    Schema(#[from] SchemaError),
    #[error("capacity must hold at least one record")]
    Capacity,
    #[error("record is {got} bytes, store expects {expected}")]
    RecordSize { got: usize, expected: usize },
    #[error("batch out of time order at position {position}")]
    OutOfOrder { position: usize },
    #[error("record {seq} is not in the live window {live:?}")]
    NotLive { seq: u64, live: Range<u64> },
    #[error("device {path} is {have} bytes, layout needs {need}")]
    DeviceTooSmall { path: PathBuf, have: u64, need: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SyncPolicy {
    /// fsync data and metadata once per appended batch.
    #[default]
    EveryBatch,
    Never,
}

#[derive(Debug, Clone, Copy)]
pub struct StoreOptions {
    pub rolling_count: u32,
    pub sync: SyncPolicy,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions { rolling_count: DEFAULT_ROLLING_COUNT, sync: SyncPolicy::EveryBatch }
    }
}

/// Point-in-time view of the writer's persistent state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreState {
    pub generation: u64,
    pub head: u64,
    pub wrapped: bool,
    pub total: u64,
    pub live_start: u64,
    pub min_time: u64,
    pub max_time: u64,
}

struct Shared {
    file: File,
    header: Header,
    schema: Arc<Schema>,
    time_offset: usize,
    // Records published to readers.
    total: AtomicU64,
    // Upper bound of sequence numbers the writer may be writing.
    reserved: AtomicU64,
    live_start: AtomicU64,
    reads: AtomicU64,
}

impl Shared {
    fn capacity(&self) -> u64 {
        self.header.capacity
    }

    fn record_size(&self) -> usize {
        self.header.record_size as usize
    }

    /// Lowest sequence number that is neither trimmed nor being overwritten.
    fn live_floor(&self) -> u64 {
        let reserved = self.reserved.load(SeqCst);
        self.live_start.load(SeqCst).max(reserved.saturating_sub(self.capacity()))
    }
}

pub struct StoreWriter {
    shared: Arc<Shared>,
    path: PathBuf,
    meta: BlockMetadata,
    sync: SyncPolicy,
}

/// Cloneable read handle.
#[derive(Clone)]
pub struct StoreReader {
    shared: Arc<Shared>,
}

fn open_backing(path: &Path, need: u64) -> Result<File, StoreError> {
    let is_block = std::fs::metadata(path).map(|m| m.file_type().is_block_device()).unwrap_or(false);
    if is_block {
        let file = OpenOptions::new().read(true).write(true).open(path)?;
        let have = device_len(&file)?;
        if have < need {
            return Err(StoreError::DeviceTooSmall { path: path.to_path_buf(), have, need });
        }
        Ok(file)
    } else {
        let file = OpenOptions::new().read(true).write(true).create(true).truncate(true).open(path)?;
        file.set_len(need)?;
        Ok(file)
    }
}

fn device_len(file: &File) -> io::Result<u64> {
    use std::io::{Seek, SeekFrom};
    let mut f = file;
    f.seek(SeekFrom::End(0))
}

/// Creates a store at `path` (a regular file, or a block device that is
/// used as one large file).
pub fn create_store(path: impl AsRef<Path>, schema: &Schema, capacity: u64, opts: StoreOptions) -> Result<StoreWriter, StoreError> {
    let path = path.as_ref();
    if capacity == 0 {
        return Err(StoreError::Capacity);
    }
    let rolling = opts.rolling_count.max(1);
    let header = Header::for_new(schema.layout_hash(), schema.record_size() as u32, capacity, rolling, schema.to_config());
    let block = header.encode()?;
    let file = open_backing(path, header.total_len())?;
    file.write_all_at(&block, 0)?;
    let meta = BlockMetadata {
        record_size: header.record_size,
        schema_hash: header.schema_hash,
        ..BlockMetadata::default()
    };
    for copy in 0..rolling {
        file.write_all_at(&meta.encode(copy), header.meta_offset(copy))?;
    }
    file.sync_all()?;
    let schema = Arc::new(schema.clone());
    Ok(StoreWriter::from_parts(file, header, schema, meta, path, opts.sync))
}

fn read_header(file: &File) -> Result<Header, StoreError> {
    let mut block = vec![0u8; BLOCK as usize];
    file.read_exact_at(&mut block, 0)?;
    Header::decode(&block)
}

fn load_schema(header: &Header) -> Result<Arc<Schema>, StoreError> {
    let schema = parse_schema(&header.schema_text)?;
    if schema.layout_hash() != header.schema_hash {
        return Err(StoreError::SchemaMismatch { stored: header.schema_hash, expected: schema.layout_hash() });
    }
    Ok(Arc::new(schema))
}

/// Newest checksum-valid metadata copy that belongs to this header.
fn newest_metadata(file: &File, header: &Header) -> Result<BlockMetadata, StoreError> {
    let mut best: Option<BlockMetadata> = None;
    let mut block = vec![0u8; BLOCK as usize];
    for copy in 0..header.rolling_count {
        file.read_exact_at(&mut block, header.meta_offset(copy))?;
        let Some(m) = BlockMetadata::decode(&block) else { continue };
        if m.schema_hash != header.schema_hash || m.record_size != header.record_size {
            continue;
        }
        if best.is_none_or(|b| m.generation > b.generation) {
            best = Some(m);
        }
    }
    best.ok_or(StoreError::NoValidMetadata)
}

/// Reopens a store for appending from its newest valid metadata copy.
pub fn recover(path: impl AsRef<Path>, opts: StoreOptions) -> Result<StoreWriter, StoreError> {
    let path = path.as_ref();
    let file = OpenOptions::new().read(true).write(true).open(path)?;
    let header = read_header(&file)?;
    let schema = load_schema(&header)?;
    let meta = newest_metadata(&file, &header)?;
    Ok(StoreWriter::from_parts(file, header, schema, meta, path, opts.sync))
}

/// Like [`recover`] but additionally requires the stored schema to match.
pub fn recover_with_schema(path: impl AsRef<Path>, schema: &Schema, opts: StoreOptions) -> Result<StoreWriter, StoreError> {
    let w = recover(path, opts)?;
    if w.shared.header.schema_hash != schema.layout_hash() {
        return Err(StoreError::SchemaMismatch { stored: w.shared.header.schema_hash, expected: schema.layout_hash() });
    }
    Ok(w)
}

/// Opens a store read-only at its newest valid metadata copy. The view is
/// a snapshot; it does not follow a writer in another process.
pub fn open_read_only(path: impl AsRef<Path>) -> Result<StoreReader, StoreError> {
    let file = File::open(path.as_ref())?;
    let header = read_header(&file)?;
    let schema = load_schema(&header)?;
    let meta = newest_metadata(&file, &header)?;
    Ok(StoreReader { shared: Arc::new(new_shared(file, header, schema, &meta)) })
}

fn new_shared(file: File, header: Header, schema: Arc<Schema>, meta: &BlockMetadata) -> Shared {
    let time_offset = schema.time_field().offset;
    Shared {
        file,
        header,
        schema,
        time_offset,
        total: AtomicU64::new(meta.total),
        reserved: AtomicU64::new(meta.total),
        live_start: AtomicU64::new(meta.live_start),
        reads: AtomicU64::new(0),
    }
}

impl StoreWriter {
    fn from_parts(file: File, header: Header, schema: Arc<Schema>, meta: BlockMetadata, path: &Path, sync: SyncPolicy) -> Self {
        let shared = Arc::new(new_shared(file, header, schema, &meta));
        StoreWriter { shared, path: path.to_path_buf(), meta, sync }
    }

    pub fn reader(&self) -> StoreReader {
        StoreReader { shared: self.shared.clone() }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.shared.schema
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn capacity(&self) -> u64 {
        self.shared.capacity()
    }

    pub fn state(&self) -> StoreState {
        let m = &self.meta;
        StoreState {
            generation: m.generation,
            head: m.head,
            wrapped: m.wrapped,
            total: m.total,
            live_start: m.live_start,
            min_time: m.min_time,
            max_time: m.max_time,
        }
    }

    pub fn header(&self) -> &Header {
        &self.shared.header
    }

    fn commit_metadata(&mut self, next: BlockMetadata) -> Result<(), StoreError> {
        let copy = (next.generation % u64::from(self.shared.header.rolling_count)) as u32;
        let block = next.encode(copy);
        self.shared.file.write_all_at(&block, self.shared.header.meta_offset(copy))?;
        if self.sync == SyncPolicy::EveryBatch {
            self.shared.file.sync_data()?;
        }
        self.meta = next;
        Ok(())
    }

    /// Appends records (stored form, non-decreasing in primary time) and
    /// returns the sequence number of the first one.
    pub fn append_batch<R: AsRef<[u8]>>(&mut self, batch: &[R]) -> Result<u64, StoreError> {
        let first_seq = self.meta.total;
        if batch.is_empty() {
            return Ok(first_seq);
        }
        let sh = self.shared.clone();
        let rs = sh.record_size();
        let toff = sh.time_offset;
        let mut prev = self.meta.max_time;
        let mut times = Vec::with_capacity(batch.len());
        for (i, r) in batch.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != rs {
                return Err(StoreError::RecordSize { got: r.len(), expected: rs });
            }
            let t = CompositeTime::from_le_bytes(r[toff..toff + 8].try_into().unwrap()).epoch_unchecked();
            if t < prev {
                return Err(StoreError::OutOfOrder { position: i });
            }
            prev = t;
            times.push(t);
        }

        let cap = sh.capacity();
        let n = batch.len() as u64;
        let new_total = first_seq + n;
        // Anything before `skip` would be overwritten within this same batch.
        let skip = n.saturating_sub(cap) as usize;
        let new_live_start = self.meta.live_start.max(new_total.saturating_sub(cap));

        if new_live_start > self.meta.live_start {
            // Trim the window past the slots about to be overwritten and make
            // that durable before touching them.
            let mut trim = self.meta;
            trim.generation += 1;
            trim.live_start = new_live_start.min(trim.total);
            if trim.live_start < trim.total {
                trim.min_time = read_time(&sh, trim.live_start)?;
            }
            sh.live_start.store(trim.live_start, SeqCst);
            self.commit_metadata(trim)?;
        }
        sh.reserved.store(new_total, SeqCst);

        let live = &batch[skip..];
        let mut seq = first_seq + skip as u64;
        let mut at = 0;
        while at < live.len() {
            let slot = seq % cap;
            let run = ((cap - slot) as usize).min(live.len() - at);
            let slices: Vec<IoSlice<'_>> = live[at..at + run].iter().map(|r| IoSlice::new(r.as_ref())).collect();
            pwritev_all(&sh.file, slices, sh.header.record_offset(slot))?;
            at += run;
            seq += run as u64;
        }

        let mut next = self.meta;
        next.generation += 1;
        next.total = new_total;
        next.head = new_total % cap;
        next.wrapped = new_total >= cap;
        next.live_start = new_live_start;
        next.max_time = *times.last().unwrap();
        next.min_time = if new_live_start >= first_seq {
            times[(new_live_start - first_seq) as usize]
        } else if self.meta.total == self.meta.live_start {
            times[0]
        } else {
            self.meta.min_time
        };
        self.commit_metadata(next)?;
        sh.live_start.store(new_live_start, SeqCst);
        sh.total.store(new_total, SeqCst);
        Ok(first_seq)
    }
}

fn read_time(sh: &Shared, seq: u64) -> Result<u64, StoreError> {
    let mut b = [0u8; 8];
    let off = sh.header.record_offset(seq % sh.capacity()) + sh.time_offset as u64;
    sh.file.read_exact_at(&mut b, off)?;
    Ok(CompositeTime::from_le_bytes(b).epoch_unchecked())
}

// IoSlice is ABI-compatible with iovec on unix.
fn pwritev_all(file: &File, mut slices: Vec<IoSlice<'_>>, mut offset: u64) -> io::Result<()> {
    const IOV_MAX: usize = 1024;
    let mut bufs: &mut [IoSlice<'_>] = &mut slices;
    while !bufs.is_empty() {
        let count = bufs.len().min(IOV_MAX);
        // SAFETY: the iovecs point at live borrowed slices.
        let n = unsafe {
            libc::pwritev(file.as_raw_fd(), bufs.as_ptr() as *const libc::iovec, count as libc::c_int, offset as libc::off_t)
        };
        if n < 0 {
            let err = io::Error::last_os_error();
            if err.kind() == io::ErrorKind::Interrupted {
                continue;
            }
            return Err(err);
        }
        if n == 0 {
            return Err(io::Error::new(io::ErrorKind::WriteZero, "pwritev wrote nothing"));
        }
        offset += n as u64;
        IoSlice::advance_slices(&mut bufs, n as usize);
    }
    Ok(())
}

impl StoreReader {
    pub fn schema(&self) -> &Arc<Schema> {
        &self.shared.schema
    }

    pub fn record_size(&self) -> usize {
        self.shared.record_size()
    }

    pub fn capacity(&self) -> u64 {
        self.shared.capacity()
    }

    /// Records ever appended (published).
    pub fn total(&self) -> u64 {
        self.shared.total.load(SeqCst)
    }

    pub fn live_window(&self) -> Range<u64> {
        let total = self.total();
        self.shared.live_floor().min(total)..total
    }

    /// Number of read calls that reached the backing file.
    pub fn io_reads(&self) -> u64 {
        self.shared.reads.load(SeqCst)
    }

    fn not_live(&self, seq: u64) -> StoreError {
        StoreError::NotLive { seq, live: self.live_window() }
    }

    /// Copies records `[seq, seq + count)` into `out` (replacing its
    /// contents). Fails if any of them is not live before or after the copy.
    pub fn read_range(&self, seq: u64, count: u64, out: &mut Vec<u8>) -> Result<(), StoreError> {
        let sh = &self.shared;
        let rs = sh.record_size();
        out.clear();
        if count == 0 {
            return Ok(());
        }
        let end = seq + count;
        if seq < sh.live_floor() || end > self.total() {
            return Err(self.not_live(seq));
        }
        out.resize(count as usize * rs, 0);
        let cap = sh.capacity();
        let mut s = seq;
        let mut at = 0usize;
        while s < end {
            let slot = s % cap;
            let run = (cap - slot).min(end - s);
            let bytes = run as usize * rs;
            sh.reads.fetch_add(1, SeqCst);
            sh.file.read_exact_at(&mut out[at..at + bytes], sh.header.record_offset(slot))?;
            at += bytes;
            s += run;
        }
        if seq < sh.live_floor() {
            return Err(self.not_live(seq));
        }
        Ok(())
    }

    pub fn read_at(&self, seq: u64) -> Result<Vec<u8>, StoreError> {
        let mut out = Vec::with_capacity(self.record_size());
        self.read_range(seq, 1, &mut out)?;
        Ok(out)
    }

    pub fn ctime_at(&self, seq: u64) -> Result<CompositeTime, StoreError> {
        let sh = &self.shared;
        if seq < sh.live_floor() || seq >= self.total() {
            return Err(self.not_live(seq));
        }
        let mut b = [0u8; 8];
        sh.reads.fetch_add(1, SeqCst);
        sh.file.read_exact_at(&mut b, sh.header.record_offset(seq % sh.capacity()) + sh.time_offset as u64)?;
        if seq < sh.live_floor() {
            return Err(self.not_live(seq));
        }
        Ok(CompositeTime::from_le_bytes(b))
    }

    pub fn header(&self) -> &Header {
        &self.shared.header
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FieldType;
    use crate::value::Value;
    use crate::ctime::{EpochMicros, MIN_EPOCH_MICROS};

    fn schema() -> Schema {
        Schema::new("s", &[("t", FieldType::Time), ("v", FieldType::U32)], "t").unwrap()
    }

    fn rec(s: &Schema, t: u64, v: u32) -> Vec<u8> {
        let wire = s.encode(&[Value::Int((MIN_EPOCH_MICROS + t) as i64), Value::Int(i64::from(v))]).unwrap();
        let mut out = vec![0u8; s.record_size()];
        s.decode_into(&wire, &mut out).unwrap();
        out
    }

    fn opts() -> StoreOptions {
        StoreOptions { sync: SyncPolicy::Never, ..StoreOptions::default() }
    }

    #[test]
    fn create_layout_size() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.ltss");
        let s = Schema::new("s", &[("t", FieldType::Time), ("x", FieldType::Ascii(20))], "t").unwrap();
        assert_eq!(s.record_size(), 28);
        let w = create_store(&p, &s, 10, StoreOptions::default()).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 4096 + 3 * 4096 + 4096);
        assert_eq!(w.header().rolling_count, 3);
        assert_eq!(w.state().total, 0);
    }

    #[test]
    fn create_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(create_store(dir.path().join("a"), &schema(), 0, opts()), Err(StoreError::Capacity)));
        assert!(matches!(create_store("/proc/forbidden/x.ltss", &schema(), 10, opts()), Err(StoreError::Io(_))));
    }

    #[test]
    fn roll_around() {
        let dir = tempfile::tempdir().unwrap();
        let s = schema();
        let mut w = create_store(dir.path().join("s"), &s, 10, opts()).unwrap();
        for t in 1..=15u64 {
            w.append_batch(&[rec(&s, t, t as u32)]).unwrap();
        }
        let st = w.state();
        assert_eq!((st.head, st.wrapped, st.total, st.live_start), (5, true, 15, 5));
        let r = w.reader();
        assert_eq!(r.live_window(), 5..15);
        let vals: Vec<Value> = (5..15).map(|q| s.stored_value(&r.read_at(q).unwrap(), 1)).collect();
        assert_eq!(vals, (6..=15).map(Value::Int).collect::<Vec<_>>());
        assert!(matches!(r.read_at(4), Err(StoreError::NotLive { .. })));
        assert!(matches!(r.read_at(15), Err(StoreError::NotLive { .. })));
        assert_eq!(st.min_time, MIN_EPOCH_MICROS + 6);
        assert_eq!(st.max_time, MIN_EPOCH_MICROS + 15);
    }

    #[test]
    fn oversized_batch_keeps_the_tail() {
        let dir = tempfile::tempdir().unwrap();
        let s = schema();
        let mut w = create_store(dir.path().join("s"), &s, 4, opts()).unwrap();
        let batch: Vec<_> = (1..=10u64).map(|t| rec(&s, t, t as u32)).collect();
        assert_eq!(w.append_batch(&batch).unwrap(), 0);
        let r = w.reader();
        assert_eq!(r.live_window(), 6..10);
        assert_eq!(s.stored_value(&r.read_at(6).unwrap(), 1), Value::Int(7));
        assert_eq!(w.state().min_time, MIN_EPOCH_MICROS + 7);
    }

    #[test]
    fn empty_batch_is_noop() {
        let dir = tempfile::tempdir().unwrap();
        let s = schema();
        let mut w = create_store(dir.path().join("s"), &s, 4, opts()).unwrap();
        let g = w.state().generation;
        w.append_batch::<Vec<u8>>(&[]).unwrap();
        assert_eq!(w.state().generation, g);
        assert!(matches!(w.reader().read_at(0), Err(StoreError::NotLive { .. })));
    }

    #[test]
    fn rejects_out_of_order_and_bad_size() {
        let dir = tempfile::tempdir().unwrap();
        let s = schema();
        let mut w = create_store(dir.path().join("s"), &s, 8, opts()).unwrap();
        w.append_batch(&[rec(&s, 5, 0)]).unwrap();
        assert!(matches!(w.append_batch(&[rec(&s, 4, 0)]), Err(StoreError::OutOfOrder { position: 0 })));
        assert!(matches!(w.append_batch(&[vec![0u8; 3]]), Err(StoreError::RecordSize { .. })));
        assert_eq!(w.state().total, 1);
    }

    #[test]
    fn sequential_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = schema();
        let mut w = create_store(dir.path().join("s"), &s, 5000, opts()).unwrap();
        let recs: Vec<_> = (0..1000u64).map(|t| rec(&s, t, (t * 7) as u32)).collect();
        for chunk in recs.chunks(37) {
            w.append_batch(chunk).unwrap();
        }
        let mut buf = Vec::new();
        w.reader().read_range(0, 1000, &mut buf).unwrap();
        assert_eq!(buf, recs.concat());
    }

    #[test]
    fn recover_clean_and_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s");
        let s = schema();
        let mut w = create_store(&p, &s, 10, opts()).unwrap();
        for t in 0..4u64 {
            w.append_batch(&[rec(&s, 2 * t, 0), rec(&s, 2 * t + 1, 0)]).unwrap();
        }
        let before = w.state();
        drop(w);
        let w2 = recover(&p, opts()).unwrap();
        assert_eq!(w2.state(), before);
        let g = before.generation;
        drop(w2);

        // Corrupt the newest copy's checksum.
        let f = OpenOptions::new().write(true).open(&p).unwrap();
        let copy = (g % 3) as u64;
        f.write_all_at(&[0xff; 4], BLOCK * (1 + copy) + layout::CRC_AT as u64).unwrap();
        let w3 = recover(&p, opts()).unwrap();
        assert_eq!(w3.state().generation, g - 1);
        assert_eq!(w3.state().total, before.total - 2);

        for c in 0..3u64 {
            f.write_all_at(&[0xff; 4], BLOCK * (1 + c) + layout::CRC_AT as u64).unwrap();
        }
        assert!(matches!(recover(&p, opts()), Err(StoreError::NoValidMetadata)));
    }

    #[test]
    fn recover_rejects_other_schema() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s");
        create_store(&p, &schema(), 10, opts()).unwrap();
        let other = Schema::new("s", &[("t", FieldType::Time), ("v", FieldType::U64)], "t").unwrap();
        assert!(matches!(recover_with_schema(&p, &other, opts()), Err(StoreError::SchemaMismatch { .. })));
    }

    #[test]
    fn torn_wrap_does_not_expose_overwritten_slots() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s");
        let s = schema();
        let mut w = create_store(&p, &s, 4, opts()).unwrap();
        w.append_batch(&[rec(&s, 1, 1), rec(&s, 2, 2), rec(&s, 3, 3), rec(&s, 4, 4)]).unwrap();
        w.append_batch(&[rec(&s, 5, 5), rec(&s, 6, 6)]).unwrap();
        let newest = w.state().generation;
        drop(w);
        // Lose the final commit: the trim record survives, the head does not.
        let f = OpenOptions::new().write(true).open(&p).unwrap();
        f.write_all_at(&[0; 4], BLOCK * (1 + newest % 3) + layout::CRC_AT as u64).unwrap();
        let w = recover(&p, opts()).unwrap();
        let r = w.reader();
        assert_eq!(r.live_window(), 2..4);
        let times: Vec<u64> = (2..4).map(|q| r.ctime_at(q).unwrap().epoch_unchecked() - MIN_EPOCH_MICROS).collect();
        assert_eq!(times, vec![3, 4]);
        assert_eq!(w.state().min_time, MIN_EPOCH_MICROS + 3);
        let _ = EpochMicros(0);
    }
}
