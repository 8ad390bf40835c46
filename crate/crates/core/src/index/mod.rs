//! Directory index from composite-time calendar fields to log positions.
//!
//! For each granularity from year down to second there is a list of runs:
//! an entry `(first_seq, ctime)` is appended whenever a stored record starts
//! a new instance of that granularity (a new year, a new month within a
//! year, and so on). Consecutive entries delimit runs, so memory grows with
//! the number of distinct instances rather than the number of records.
//!
//! Lists are stored as immutable chunks of [`CHUNK_ENTRIES`] entries, each
//! carrying a static interval tree. The writer publishes a fresh
//! [`IndexView`] after every append batch; readers load the current view
//! without locking and keep using it for as long as they hold it.

mod snapshot;
pub mod tree;

use std::ops::Range;
use std::sync::Arc;

use arc_swap::ArcSwap;
use thiserror::Error;

use crate::ctime::{CalendarField, CompositeTime};
use crate::store::{StoreError, StoreReader};
pub use snapshot::{load_or_rebuild, rebuild, SNAPSHOT_MAGIC};
use tree::{Chunk, Run};

pub const CHUNK_ENTRIES: usize = 1024;

/// Granularities with an offset list, most significant first.
pub const LEVELS: [CalendarField; 6] = [
    CalendarField::Year,
    CalendarField::Month,
    CalendarField::Day,
    CalendarField::Hour,
    CalendarField::Min,
    CalendarField::Sec,
];

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("index append out of order: expected record {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("record {seq} is earlier than its predecessor")]
    TimeRegression { seq: u64 },
    #[error("index snapshot I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad index snapshot: {0}")]
    BadSnapshot(String),
    #[error("index snapshot covers {snapshot} records but the store only has {store}")]
    SnapshotAhead { snapshot: u64, store: u64 },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn eval<T: Ord>(self, a: T, b: T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }

    /// The operator with its operands swapped (`a < b` iff `b > a`).
    pub fn flip(self) -> Self {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            o => o,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// `field op value` on the primary composite time. Year values are offsets
/// from 2000, as stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeConstraint {
    pub field: CalendarField,
    pub op: CmpOp,
    pub value: i64,
}

impl TimeConstraint {
    pub fn new(field: CalendarField, op: CmpOp, value: i64) -> Self {
        TimeConstraint { field, op, value }
    }

    pub fn matches(&self, c: CompositeTime) -> bool {
        self.op.eval(i64::from(c.extract(self.field)), self.value)
    }

    /// Offset list that resolves this constraint (wday lives on day runs).
    fn level(&self) -> Option<usize> {
        match self.field {
            CalendarField::Wday => Some(2),
            CalendarField::Usec => None,
            f => LEVELS.iter().position(|&l| l == f),
        }
    }
}

/// Published, immutable run list for one granularity.
#[derive(Clone, Default)]
pub struct ListView {
    sealed: Arc<Vec<Arc<Chunk>>>,
    tail: Arc<Chunk>,
}

impl ListView {
    pub fn len(&self) -> usize {
        self.sealed.iter().map(|c| c.len()).sum::<usize>() + self.tail.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn chunks(&self) -> impl Iterator<Item = &Arc<Chunk>> {
        self.sealed.iter().chain(std::iter::once(&self.tail))
    }

    /// Runs overlapping `[lo, hi)` in log order.
    pub fn overlapping(&self, lo: u64, hi: u64, f: &mut impl FnMut(Run)) {
        let first = self.sealed.partition_point(|c| c.last_end().is_some_and(|e| e <= lo));
        for c in self.sealed[first..].iter().chain(std::iter::once(&self.tail)) {
            if c.first_start().is_some_and(|s| s >= hi) {
                break;
            }
            c.overlapping(lo, hi, f);
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.chunks().flat_map(|c| c.entries())
    }

    fn footprint_bytes(&self) -> usize {
        self.chunks().map(|c| c.footprint_bytes()).sum()
    }
}

/// A consistent snapshot of the index, valid for the records in `live`.
#[derive(Clone, Default)]
pub struct IndexView {
    live: Range<u64>,
    lists: [ListView; 6],
    publish_count: u64,
}

impl IndexView {
    pub fn live(&self) -> Range<u64> {
        self.live.clone()
    }

    pub fn high_water(&self) -> u64 {
        self.live.end
    }

    pub fn publish_count(&self) -> u64 {
        self.publish_count
    }

    pub fn list(&self, g: CalendarField) -> Option<&ListView> {
        LEVELS.iter().position(|&l| l == g).map(|i| &self.lists[i])
    }

    pub fn entry_counts(&self) -> [usize; 6] {
        std::array::from_fn(|i| self.lists[i].len())
    }

    pub fn footprint_bytes(&self) -> usize {
        self.lists.iter().map(|l| l.footprint_bytes()).sum()
    }

    /// Record ranges whose records satisfy every constraint on an indexed
    /// granularity (year..sec and wday; usec constraints are ignored here).
    /// Ranges are disjoint, ascending and maximal.
    pub fn narrow(&self, cs: &[TimeConstraint]) -> Vec<Range<u64>> {
        self.narrow_within(self.live.clone(), cs, None)
    }

    /// Like [`narrow`](Self::narrow), restricted to `window`. With
    /// `split_at = Some(g)` the result is additionally cut at every run
    /// boundary of granularity `g`, so each range lies in one instance of
    /// `g` (needed before searching on a finer field).
    pub fn narrow_within(&self, window: Range<u64>, cs: &[TimeConstraint], split_at: Option<CalendarField>) -> Vec<Range<u64>> {
        let lo = window.start.max(self.live.start);
        let hi = window.end.min(self.live.end);
        if lo >= hi {
            return Vec::new();
        }
        let mut per_level: [Vec<&TimeConstraint>; 6] = Default::default();
        for c in cs {
            if let Some(l) = c.level() {
                per_level[l].push(c);
            }
        }
        let split_level = split_at.and_then(|g| TimeConstraint::new(g, CmpOp::Eq, 0).level());
        let deepest = (0..6).rev().find(|&l| !per_level[l].is_empty() || Some(l) == split_level);
        let Some(deepest) = deepest else { return vec![lo..hi] };

        let mut ranges = vec![lo..hi];
        for level in 0..=deepest {
            if per_level[level].is_empty() && Some(level) != split_level {
                continue;
            }
            let preds = &per_level[level];
            let merge = Some(level) != split_level;
            let mut next: Vec<Range<u64>> = Vec::new();
            for r in &ranges {
                self.lists[level].overlapping(r.start, r.end, &mut |run| {
                    let ct = CompositeTime::from_bits(run.ctime);
                    if !preds.iter().all(|p| p.matches(ct)) {
                        return;
                    }
                    let s = run.start.max(r.start);
                    let e = run.end.min(r.end);
                    match next.last_mut() {
                        Some(last) if merge && last.end == s => last.end = e,
                        _ => next.push(s..e),
                    }
                });
            }
            ranges = next;
            if ranges.is_empty() {
                break;
            }
        }
        ranges
    }
}

struct ListWriter {
    sealed: Arc<Vec<Arc<Chunk>>>,
    tail: Vec<(u64, u64)>,
    published_tail: Arc<Chunk>,
    dirty: bool,
}

impl ListWriter {
    fn new() -> Self {
        ListWriter { sealed: Arc::default(), tail: Vec::with_capacity(CHUNK_ENTRIES), published_tail: Arc::default(), dirty: false }
    }

    fn push(&mut self, seq: u64, ctime: u64) {
        if self.tail.len() == CHUNK_ENTRIES {
            let full = Chunk::build(&self.tail, seq);
            Arc::make_mut(&mut self.sealed).push(Arc::new(full));
            self.tail.clear();
        }
        self.tail.push((seq, ctime));
        self.dirty = true;
    }

    /// Drops whole chunks that lie before `live_start`.
    fn compact(&mut self, live_start: u64) {
        let dead = self.sealed.partition_point(|c| c.last_end().is_some_and(|e| e <= live_start));
        if dead > 0 {
            Arc::make_mut(&mut self.sealed).drain(..dead);
        }
    }

    fn view(&mut self) -> ListView {
        if self.dirty {
            self.published_tail = Arc::new(Chunk::build(&self.tail, u64::MAX));
            self.dirty = false;
        }
        ListView { sealed: self.sealed.clone(), tail: self.published_tail.clone() }
    }
}

/// Read side: cheap to clone, never blocks the writer.
#[derive(Clone)]
pub struct IndexReader {
    view: Arc<ArcSwap<IndexView>>,
}

impl IndexReader {
    pub fn load(&self) -> Arc<IndexView> {
        self.view.load_full()
    }
}

/// Single-writer side of the index.
pub struct IndexWriter {
    lists: [ListWriter; 6],
    next_seq: u64,
    live_start: u64,
    last: Option<CompositeTime>,
    publish_count: u64,
    view: Arc<ArcSwap<IndexView>>,
}

impl Default for IndexWriter {
    fn default() -> Self {
        Self::new()
    }
}

impl IndexWriter {
    pub fn new() -> Self {
        Self::starting_at(0)
    }

    /// Empty index whose first appended record will be `seq`.
    pub fn starting_at(seq: u64) -> Self {
        IndexWriter {
            lists: std::array::from_fn(|_| ListWriter::new()),
            next_seq: seq,
            live_start: seq,
            last: None,
            publish_count: 0,
            view: Arc::new(ArcSwap::from_pointee(IndexView { live: seq..seq, ..IndexView::default() })),
        }
    }

    pub fn reader(&self) -> IndexReader {
        IndexReader { view: self.view.clone() }
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn live_start(&self) -> u64 {
        self.live_start
    }

    pub fn last_time(&self) -> Option<CompositeTime> {
        self.last
    }

    /// Indexes the record at `seq`, which must directly follow the previous.
    pub fn append(&mut self, seq: u64, ct: CompositeTime) -> Result<(), IndexError> {
        if seq != self.next_seq {
            return Err(IndexError::OutOfOrder { expected: self.next_seq, got: seq });
        }
        if let Some(prev) = self.last {
            if ct < prev {
                return Err(IndexError::TimeRegression { seq });
            }
        }
        for (i, &g) in LEVELS.iter().enumerate() {
            let changed = self.last.map_or(true, |p| p.instance_key(g) != ct.instance_key(g));
            if changed {
                self.lists[i].push(seq, ct.to_bits());
            }
        }
        self.last = Some(ct);
        self.next_seq = seq + 1;
        Ok(())
    }

    /// Advances the live window start after the store rolled over old records.
    pub fn set_live_start(&mut self, live_start: u64) {
        self.live_start = self.live_start.max(live_start.min(self.next_seq));
        for l in &mut self.lists {
            l.compact(self.live_start);
        }
    }

    /// Makes everything appended so far visible to readers.
    pub fn publish(&mut self) {
        self.publish_count += 1;
        let view = IndexView {
            live: self.live_start..self.next_seq,
            lists: std::array::from_fn(|i| self.lists[i].view()),
            publish_count: self.publish_count,
        };
        self.view.store(Arc::new(view));
    }

    pub fn publish_count(&self) -> u64 {
        self.publish_count
    }

    pub fn footprint_bytes(&self) -> usize {
        self.view.load().footprint_bytes() + self.lists.iter().map(|l| l.tail.capacity() * 16).sum::<usize>()
    }

    pub(crate) fn raw_entries(&self, level: usize) -> Vec<(u64, u64)> {
        let mut out: Vec<(u64, u64)> = self.lists[level].sealed.iter().flat_map(|c| c.entries()).collect();
        out.extend_from_slice(&self.lists[level].tail);
        out
    }

    pub(crate) fn from_raw(next_seq: u64, live_start: u64, last: Option<CompositeTime>, lists: [Vec<(u64, u64)>; 6]) -> Self {
        let mut w = IndexWriter::starting_at(next_seq);
        w.live_start = live_start;
        w.last = last;
        for (i, entries) in lists.into_iter().enumerate() {
            for (s, c) in entries {
                w.lists[i].push(s, c);
            }
        }
        w.set_live_start(live_start);
        w.publish();
        w
    }
}

/// Narrows `range` (time-sorted in the store) to records with
/// `lo <= key(record) < hi`, by exponential then binary search.
pub fn seek_by<F>(range: Range<u64>, lo: u64, hi: u64, mut key: F) -> Result<Range<u64>, StoreError>
where
    F: FnMut(u64) -> Result<u64, StoreError>,
{
    if lo >= hi || range.is_empty() {
        return Ok(range.start..range.start);
    }
    let start = lower_bound(range.clone(), lo, &mut key)?;
    let end = lower_bound(start..range.end, hi, &mut key)?;
    Ok(start..end)
}

/// First position in `range` whose key is `>= target`.
fn lower_bound<F>(range: Range<u64>, target: u64, key: &mut F) -> Result<u64, StoreError>
where
    F: FnMut(u64) -> Result<u64, StoreError>,
{
    // Gallop from the front to bracket the answer, then bisect.
    let (mut a, mut b) = (range.start, range.end);
    let mut step = 1u64;
    let mut probe = a;
    while probe < b {
        if key(probe)? >= target {
            b = probe;
            break;
        }
        a = probe + 1;
        probe = a + step;
        step *= 2;
    }
    while a < b {
        let mid = a + (b - a) / 2;
        if key(mid)? < target {
            a = mid + 1;
        } else {
            b = mid;
        }
    }
    Ok(a)
}

/// Narrows a time-sorted range to records with `t_lo <= epoch < t_hi`.
pub fn subsecond_seek(store: &StoreReader, range: Range<u64>, t_lo: u64, t_hi: u64) -> Result<Range<u64>, StoreError> {
    seek_by(range, t_lo, t_hi, |q| store.ctime_at(q).map(|c| c.epoch_unchecked()))
}

/// Narrows a range lying within one second to records with
/// `u_lo <= usec < u_hi`.
pub fn usec_seek(store: &StoreReader, range: Range<u64>, u_lo: u64, u_hi: u64) -> Result<Range<u64>, StoreError> {
    seek_by(range, u_lo, u_hi, |q| store.ctime_at(q).map(|c| u64::from(c.usec())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctime::{EpochMicros, MIN_EPOCH_MICROS};
    use proptest::prelude::*;
    use CalendarField::*;

    fn ct(epoch: u64) -> CompositeTime {
        CompositeTime::from_epoch(EpochMicros(epoch)).unwrap()
    }

    fn build(times: &[u64]) -> IndexWriter {
        let mut w = IndexWriter::new();
        for (i, &t) in times.iter().enumerate() {
            w.append(i as u64, ct(t)).unwrap();
        }
        w.publish();
        w
    }

    fn oracle(times: &[u64], live: Range<u64>, cs: &[TimeConstraint]) -> Vec<Range<u64>> {
        let mut out: Vec<Range<u64>> = Vec::new();
        for q in live {
            let c = ct(times[q as usize]);
            if cs.iter().filter(|k| k.field != Usec).all(|k| k.matches(c)) {
                match out.last_mut() {
                    Some(r) if r.end == q => r.end = q + 1,
                    _ => out.push(q..q + 1),
                }
            }
        }
        out
    }

    const DAY: u64 = 86_400_000_000;

    #[test]
    fn value_change_rule() {
        let y15 = CompositeTime::from_parts(2015, 6, 1, 0, 0, 0, 0).unwrap().epoch_unchecked();
        let w = build(&[y15, y15 + 366 * DAY]);
        assert_eq!(w.reader().load().entry_counts()[0], 2);
        let base = MIN_EPOCH_MICROS + 5_000_000;
        let w = build(&(0..100).map(|i| base + i * 1000).collect::<Vec<_>>());
        assert_eq!(w.reader().load().entry_counts(), [1, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn same_hour_on_consecutive_days_are_separate_runs() {
        let t0 = MIN_EPOCH_MICROS + 9 * 3_600_000_000;
        let times = [t0, t0 + 1, t0 + DAY, t0 + DAY + 1];
        let w = build(&times);
        let v = w.reader().load();
        assert_eq!(v.narrow(&[TimeConstraint::new(Hour, CmpOp::Eq, 9)]), vec![0..4]);
        assert_eq!(v.list(Hour).unwrap().len(), 2);
        assert_eq!(v.narrow_within(v.live(), &[TimeConstraint::new(Hour, CmpOp::Eq, 9)], Some(Hour)), vec![0..2, 2..4]);
    }

    #[test]
    fn empty_and_absent() {
        let w = IndexWriter::new();
        assert!(w.reader().load().narrow(&[]).is_empty());
        let w = build(&[MIN_EPOCH_MICROS, MIN_EPOCH_MICROS + 1]);
        let v = w.reader().load();
        assert_eq!(v.narrow(&[]), vec![0..2]);
        assert!(v.narrow(&[TimeConstraint::new(Year, CmpOp::Eq, 99)]).is_empty());
    }

    #[test]
    fn rejects_out_of_order() {
        let mut w = IndexWriter::new();
        w.append(0, ct(MIN_EPOCH_MICROS + 10)).unwrap();
        assert!(matches!(w.append(2, ct(MIN_EPOCH_MICROS + 11)), Err(IndexError::OutOfOrder { .. })));
        assert!(matches!(w.append(1, ct(MIN_EPOCH_MICROS + 9)), Err(IndexError::TimeRegression { .. })));
    }

    #[test]
    fn year_month_drill_down_over_two_years() {
        // 10^4 records spread over 2014-2015.
        let start = CompositeTime::from_parts(2014, 1, 1, 0, 0, 0, 0).unwrap().epoch_unchecked();
        let span = 730 * DAY;
        let times: Vec<u64> = (0..10_000u64).map(|i| start + i * (span / 10_000)).collect();
        let w = build(&times);
        let v = w.reader().load();
        let cs = [TimeConstraint::new(Year, CmpOp::Eq, 15), TimeConstraint::new(Month, CmpOp::Eq, 3)];
        let got = v.narrow(&cs);
        assert_eq!(got.len(), 1);
        assert_eq!(got, oracle(&times, 0..10_000, &cs));
    }

    #[test]
    fn chunks_and_compaction() {
        // One record per second so every list but sec stays tiny.
        let times: Vec<u64> = (0..5000u64).map(|i| MIN_EPOCH_MICROS + i * 1_000_000).collect();
        let mut w = build(&times);
        assert_eq!(w.reader().load().list(Sec).unwrap().len(), 5000);
        w.set_live_start(3000);
        w.publish();
        let v = w.reader().load();
        assert!(v.list(Sec).unwrap().len() < 5000);
        let cs = [TimeConstraint::new(Sec, CmpOp::Eq, 7)];
        assert_eq!(v.narrow(&cs), oracle(&times, 3000..5000, &cs));
        assert_eq!(v.narrow(&[]), vec![3000..5000]);
    }

    #[test]
    fn readers_keep_their_view() {
        let mut w = build(&[MIN_EPOCH_MICROS]);
        let r = w.reader();
        let old = r.load();
        w.append(1, ct(MIN_EPOCH_MICROS + 1)).unwrap();
        w.publish();
        assert_eq!(old.live(), 0..1);
        assert_eq!(r.load().live(), 0..2);
    }

    #[test]
    fn seek_matches_scan() {
        let keys: Vec<u64> = (0..1000u64).map(|i| i * 1000).collect();
        let k = |q: u64| Ok(keys[q as usize]);
        let r = seek_by(0..1000, 250_000, 750_000, k).unwrap();
        let scan: Vec<u64> = (0..1000u64).filter(|&q| (250_000..750_000).contains(&keys[q as usize])).collect();
        assert_eq!(r, scan[0]..scan.last().unwrap() + 1);
        assert_eq!(seek_by(0..1000, 0, u64::MAX, k).unwrap(), 0..1000);
        assert!(seek_by(0..1000, 5, 5, k).unwrap().is_empty());
    }

    fn arb_field() -> impl Strategy<Value = CalendarField> {
        prop::sample::select(vec![Year, Month, Day, Wday, Hour, Min, Sec])
    }

    fn arb_op() -> impl Strategy<Value = CmpOp> {
        prop::sample::select(vec![CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn narrow_equals_scan(
            steps in prop::collection::vec(0u64..4_000_000_000, 1..400),
            cs in prop::collection::vec((arb_field(), arb_op(), 0i64..60), 0..4),
            live_from in 0usize..100,
        ) {
            let mut t = MIN_EPOCH_MICROS + 40 * DAY;
            let times: Vec<u64> = steps.iter().map(|s| { t += s; t }).collect();
            let mut w = build(&times);
            let ls = (live_from.min(times.len())) as u64;
            w.set_live_start(ls);
            w.publish();
            let cs: Vec<TimeConstraint> = cs.into_iter().map(|(f, o, v)| {
                let v = match f { Year => v % 3, Month => v % 13, Day => v % 32, Wday => v % 7, Hour => v % 24, _ => v };
                TimeConstraint::new(f, o, v)
            }).collect();
            let v = w.reader().load();
            prop_assert_eq!(v.narrow(&cs), oracle(&times, ls..times.len() as u64, &cs));
        }
    }
}
