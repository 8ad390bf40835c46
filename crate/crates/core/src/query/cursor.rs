//! Iterator over the records a plan selects, across partitions.
//!
//! Each partition has a sub-cursor reading its ranges in blocks. Records
//! overwritten by roll-around while a cursor is open are skipped: the
//! cursor only ever yields records that were live when read.

use std::collections::VecDeque;
use std::ops::Range;
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::Arc;

use crate::partition::PartitionReader;
use crate::schema::Schema;
use crate::store::StoreError;
use crate::value::Value;

use super::plan::{partition_ranges, QueryPlan, Resolved};
use super::prefetch::PrefetchCache;
use super::table::{column_value, resolve_column, Column, LogicalTable};
use super::QueryError;

/// Records read per storage call.
pub const BLOCK_RECORDS: u64 = 512;

/// Bits of a rowid holding the per-partition sequence number.
pub const ROWID_SEQ_BITS: u32 = 48;

/// How records from several partitions are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CombineMode {
    /// Exhaust partition 0, then 1, and so on.
    Append,
    /// Interleave by primary time (ties broken by partition id).
    #[default]
    SortMerge,
}

#[derive(Clone, Default)]
pub struct CursorOptions {
    pub mode: CombineMode,
    /// Newest first.
    pub reverse: bool,
    /// Read partitions ahead on their own threads.
    pub parallel: bool,
    pub cache: Option<Arc<PrefetchCache>>,
}

pub fn rowid(partition: u16, seq: u64) -> u64 {
    (u64::from(partition) << ROWID_SEQ_BITS) | (seq & ((1 << ROWID_SEQ_BITS) - 1))
}

/// Yields the blocks of one partition's ranges in scan order.
struct BlockSource {
    part: PartitionReader,
    ranges: VecDeque<Range<u64>>,
    reverse: bool,
    cache: Option<Arc<PrefetchCache>>,
}

impl BlockSource {
    /// Fills `buf` with the next block; returns its first seq and length.
    fn next_block(&mut self, buf: &mut Vec<u8>) -> Result<Option<(u64, u64)>, StoreError> {
        let rs = self.part.store.record_size() as u64;
        loop {
            let r = if self.reverse { self.ranges.back() } else { self.ranges.front() };
            let Some(r) = r.cloned() else { return Ok(None) };
            if r.is_empty() {
                self.pop();
                continue;
            }
            let n = (r.end - r.start).min(BLOCK_RECORDS);
            let start = if self.reverse { r.end - n } else { r.start };
            if let Some(c) = &self.cache {
                let floor = self.part.store.live_window().start;
                let probe = if self.reverse { r.end - 1 } else { r.start };
                if let Some((ext, data)) = c.lookup(self.part.id, probe, floor) {
                    // Serve the part of this block the extent covers.
                    let ext_end = ext + data.len() as u64 / rs;
                    let (s, e) = if self.reverse { ((r.end - n).max(ext), r.end) } else { (r.start, (r.start + n).min(ext_end)) };
                    buf.clear();
                    buf.extend_from_slice(&data[((s - ext) * rs) as usize..((e - ext) * rs) as usize]);
                    self.consume(s, e);
                    return Ok(Some((s, e - s)));
                }
            }
            match self.part.store.read_range(start, n, buf) {
                Ok(()) => {
                    self.consume(start, start + n);
                    return Ok(Some((start, n)));
                }
                Err(StoreError::NotLive { .. }) => {
                    let floor = self.part.store.live_window().start;
                    if start >= floor {
                        // Beyond the published tail: cannot happen for
                        // ranges taken from the index.
                        return Err(StoreError::NotLive { seq: start, live: self.part.store.live_window() });
                    }
                    self.clip(floor);
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn pop(&mut self) {
        if self.reverse {
            self.ranges.pop_back();
        } else {
            self.ranges.pop_front();
        }
    }

    fn consume(&mut self, s: u64, e: u64) {
        if self.reverse {
            let r = self.ranges.back_mut().unwrap();
            r.end = s;
        } else {
            let r = self.ranges.front_mut().unwrap();
            r.start = e;
        }
    }

    /// Drops everything below the live floor.
    fn clip(&mut self, floor: u64) {
        self.ranges.retain(|r| r.end > floor);
        if let Some(r) = self.ranges.front_mut() {
            r.start = r.start.max(floor);
        }
    }
}

type Block = Result<(u64, u64, Vec<u8>), StoreError>;

enum Feed {
    Inline(BlockSource),
    Thread(Receiver<Block>),
}

struct SubCursor {
    part: u16,
    feed: Feed,
    buf: Vec<u8>,
    first: u64,
    count: u64,
    /// Records of the block already yielded.
    taken: u64,
    reverse: bool,
    rs: usize,
    /// Current record index within the block, if positioned.
    at: Option<u64>,
}

impl SubCursor {
    fn new(src: BlockSource, parallel: bool) -> Self {
        let part = src.part.id;
        let rs = src.part.store.record_size();
        let reverse = src.reverse;
        let feed = if parallel {
            let (tx, rx) = sync_channel::<Block>(2);
            let mut src = src;
            std::thread::spawn(move || loop {
                let mut buf = Vec::new();
                let msg = match src.next_block(&mut buf) {
                    Ok(Some((f, n))) => Ok((f, n, buf)),
                    Ok(None) => return,
                    Err(e) => Err(e),
                };
                let stop = msg.is_err();
                if tx.send(msg).is_err() || stop {
                    return;
                }
            });
            Feed::Thread(rx)
        } else {
            Feed::Inline(src)
        };
        SubCursor { part, feed, buf: Vec::new(), first: 0, count: 0, taken: 0, reverse, rs, at: None }
    }

    /// Moves to the next record; false when exhausted.
    fn advance(&mut self) -> Result<bool, StoreError> {
        if self.taken == self.count {
            let got = match &mut self.feed {
                Feed::Inline(src) => src.next_block(&mut self.buf)?,
                Feed::Thread(rx) => match rx.recv() {
                    Ok(Ok((f, n, buf))) => {
                        self.buf = buf;
                        Some((f, n))
                    }
                    Ok(Err(e)) => return Err(e),
                    Err(_) => None,
                },
            };
            let Some((f, n)) = got else {
                self.at = None;
                return Ok(false);
            };
            self.first = f;
            self.count = n;
            self.taken = 0;
        }
        let i = if self.reverse { self.count - 1 - self.taken } else { self.taken };
        self.taken += 1;
        self.at = Some(i);
        Ok(true)
    }

    #[inline]
    fn record(&self) -> Option<&[u8]> {
        self.at.map(|i| &self.buf[i as usize * self.rs..(i as usize + 1) * self.rs])
    }

    fn seq(&self) -> Option<u64> {
        self.at.map(|i| self.first + i)
    }
}

/// Cursor over the records of a plan.
pub struct Cursor {
    schema: Arc<Schema>,
    subs: Vec<SubCursor>,
    mode: CombineMode,
    reverse: bool,
    residual: Vec<Resolved>,
    /// Sub-cursor holding the current row.
    cur: Option<usize>,
    /// Sub-cursors whose head has not been loaded yet (sort-merge).
    primed: bool,
    eof: bool,
    time_offset: usize,
}

/// Opens a cursor positioned on the first matching record.
pub fn open_cursor(table: &LogicalTable, plan: &QueryPlan, opts: CursorOptions) -> Result<Cursor, QueryError> {
    open_partitions(table.schema().clone(), &table.table.partitions, plan, opts)
}

pub fn open_partitions(schema: Arc<Schema>, parts: &[PartitionReader], plan: &QueryPlan, opts: CursorOptions) -> Result<Cursor, QueryError> {
    let parallel = opts.parallel && parts.len() > 1;
    let mut subs = Vec::with_capacity(parts.len());
    for p in parts {
        let ranges = partition_ranges(plan, p)?;
        let src = BlockSource { part: p.clone(), ranges: ranges.into(), reverse: opts.reverse, cache: opts.cache.clone() };
        subs.push(SubCursor::new(src, parallel));
    }
    let time_offset = schema.time_field().offset;
    let mut c = Cursor { schema, subs, mode: opts.mode, reverse: opts.reverse, residual: plan.residual.clone(), cur: None, primed: false, eof: false, time_offset };
    c.next()?;
    Ok(c)
}

impl Cursor {
    pub fn eof(&self) -> bool {
        self.eof
    }

    /// Advances to the next matching record.
    pub fn next(&mut self) -> Result<(), QueryError> {
        if self.eof {
            return Ok(());
        }
        loop {
            let got = match self.mode {
                CombineMode::Append => self.step_append()?,
                CombineMode::SortMerge => self.step_merge()?,
            };
            if !got {
                self.eof = true;
                self.cur = None;
                return Ok(());
            }
            let rec = self.subs[self.cur.unwrap()].record().unwrap();
            if self.residual.iter().all(|r| r.matches(&self.schema, rec)) {
                return Ok(());
            }
        }
    }

    fn step_append(&mut self) -> Result<bool, StoreError> {
        let mut i = self.cur.unwrap_or(0);
        while i < self.subs.len() {
            if self.subs[i].advance()? {
                self.cur = Some(i);
                return Ok(true);
            }
            i += 1;
        }
        Ok(false)
    }

    fn key(&self, i: usize) -> Option<u64> {
        let off = self.time_offset;
        self.subs[i].record().map(|r| {
            let ct = crate::ctime::CompositeTime::from_le_bytes(r[off..off + 8].try_into().unwrap());
            ct.sort_key()
        })
    }

    fn step_merge(&mut self) -> Result<bool, StoreError> {
        if !self.primed {
            for s in &mut self.subs {
                s.advance()?;
            }
            self.primed = true;
        } else if let Some(i) = self.cur {
            self.subs[i].advance()?;
        }
        let mut best: Option<(u64, usize)> = None;
        for i in 0..self.subs.len() {
            let Some(k) = self.key(i) else { continue };
            let better = match best {
                None => true,
                Some((bk, _)) if self.reverse => k >= bk,
                Some((bk, _)) => k < bk,
            };
            if better {
                best = Some((k, i));
            }
        }
        self.cur = best.map(|(_, i)| i);
        Ok(best.is_some())
    }

    fn current(&self) -> Result<&SubCursor, QueryError> {
        match self.cur {
            Some(i) if !self.eof => Ok(&self.subs[i]),
            _ => Err(QueryError::Eof),
        }
    }

    /// Current record in stored form.
    pub fn record(&self) -> Result<&[u8], QueryError> {
        Ok(self.current()?.record().unwrap())
    }

    pub fn column(&self, c: Column) -> Result<Value, QueryError> {
        Ok(column_value(&self.schema, self.record()?, c))
    }

    pub fn column_by_name(&self, name: &str) -> Result<Value, QueryError> {
        let c = resolve_column(&self.schema, name).ok_or_else(|| QueryError::UnknownColumn(name.to_string()))?;
        self.column(c)
    }

    /// Partition id in the high bits, per-partition sequence number below.
    pub fn rowid(&self) -> Result<u64, QueryError> {
        let s = self.current()?;
        Ok(rowid(s.part, s.seq().unwrap()))
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctime::{CompositeTime, EpochMicros};
    use crate::db::Database;
    use crate::partition::Partition;
    use crate::query::plan::plan_resolved;
    use crate::schema::parse_schema;
    use crate::store::{StoreOptions, SyncPolicy};

    const T0: u64 = 1_400_000_000_000_000;

    fn stored(s: &Schema, t: u64, v: i64) -> Vec<u8> {
        let mut b = s.encode(&[Value::Int(t as i64), Value::Int(v)]).unwrap();
        let ct = CompositeTime::from_epoch(EpochMicros(t)).unwrap();
        b[0..8].copy_from_slice(&ct.to_le_bytes());
        b
    }

    fn two_partitions(a: &[u64], b: &[u64]) -> (tempfile::TempDir, LogicalTable) {
        let dir = tempfile::tempdir().unwrap();
        let s = parse_schema("schema t\nfield t time\nfield v i64\nprimary_time t\ncapacity_records 1000\npipelines 2\n").unwrap();
        let opts = StoreOptions { sync: SyncPolicy::Never, ..Default::default() };
        let (db, mut parts) = Database::create(dir.path(), &s, opts).unwrap();
        let fill = |p: &mut Partition, ts: &[u64]| {
            let batch: Vec<Vec<u8>> = ts.iter().map(|&t| stored(&s, T0 + t, t as i64)).collect();
            p.commit(&batch).unwrap();
        };
        fill(&mut parts[0], a);
        fill(&mut parts[1], b);
        (dir, LogicalTable::new(db.table()))
    }

    fn collect(t: &LogicalTable, opts: CursorOptions) -> Vec<i64> {
        let plan = plan_resolved(t.schema(), Vec::new(), 0);
        let mut c = open_cursor(t, &plan, opts).unwrap();
        let mut out = Vec::new();
        while !c.eof() {
            match c.column(Column::Field(1)).unwrap() {
                Value::Int(v) => out.push(v),
                _ => unreachable!(),
            }
            c.next().unwrap();
        }
        assert!(matches!(c.record(), Err(QueryError::Eof)));
        out
    }

    #[test]
    fn append_and_merge_orders() {
        let (_d, t) = two_partitions(&[1, 3], &[2, 4]);
        let merge = CursorOptions { mode: CombineMode::SortMerge, ..Default::default() };
        let append = CursorOptions { mode: CombineMode::Append, ..Default::default() };
        assert_eq!(collect(&t, merge.clone()), vec![1, 2, 3, 4]);
        assert_eq!(collect(&t, append.clone()), vec![1, 3, 2, 4]);
        assert_eq!(collect(&t, CursorOptions { reverse: true, ..merge.clone() }), vec![4, 3, 2, 1]);
        assert_eq!(collect(&t, CursorOptions { parallel: true, ..merge }), vec![1, 2, 3, 4]);
        assert_eq!(collect(&t, CursorOptions { parallel: true, ..append }), vec![1, 3, 2, 4]);
    }

    #[test]
    fn single_partition_modes_agree_and_rowids_carry_partition() {
        let (_d, t) = two_partitions(&[5, 6, 7], &[]);
        let a = collect(&t, CursorOptions { mode: CombineMode::Append, ..Default::default() });
        let m = collect(&t, CursorOptions::default());
        assert_eq!(a, m);
        let (_d, t) = two_partitions(&[], &[9]);
        let plan = plan_resolved(t.schema(), Vec::new(), 0);
        let c = open_cursor(&t, &plan, CursorOptions::default()).unwrap();
        assert_eq!(c.rowid().unwrap(), 1 << ROWID_SEQ_BITS);
        assert_eq!(c.column_by_name("CTIME_usec").unwrap(), Value::Int(9));
    }

    #[test]
    fn blocks_span_many_reads() {
        let a: Vec<u64> = (0..2000).step_by(2).collect();
        let b: Vec<u64> = (1..2000).step_by(2).collect();
        let (_d, t) = two_partitions(&a[..900], &b[..900]);
        let got = collect(&t, CursorOptions::default());
        let mut want: Vec<i64> = a[..900].iter().chain(&b[..900]).map(|&x| x as i64).collect();
        want.sort();
        assert_eq!(got, want);
        let rev = collect(&t, CursorOptions { reverse: true, parallel: true, ..Default::default() });
        want.reverse();
        assert_eq!(rev, want);
    }
}
