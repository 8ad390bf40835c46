//! In-flight record ordering with quantum buckets.
//!
//! Each record goes to the bucket whose window contains its timestamp.
//! Buckets wait in an ordered queue until their window has ended and
//! `linger` further quanta have passed on the arrival clock; then they are
//! closed, the watermark moves to the end of the closed window, and the
//! bucket is insertion-sorted and handed to the store. A record whose
//! window starts below the watermark arrives too late to be ordered
//! (delinquent) and is dropped.

use std::collections::VecDeque;

use crate::schema::Settings;

/// Anything carrying an epoch-microsecond ordering key.
pub trait Timed {
    fn time_key(&self) -> u64;
}

impl Timed for u64 {
    fn time_key(&self) -> u64 {
        *self
    }
}

impl<T> Timed for (u64, T) {
    fn time_key(&self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderingConfig {
    /// Window length in microseconds.
    pub quantum_us: u64,
    /// Extra quanta a bucket stays open after its window has ended.
    pub linger: u32,
    /// Open-bucket bound; the oldest bucket is closed early beyond it.
    pub max_open: usize,
}

impl Default for OrderingConfig {
    fn default() -> Self {
        OrderingConfig { quantum_us: 100_000, linger: 2, max_open: 16 }
    }
}

impl OrderingConfig {
    pub fn from_settings(s: &Settings) -> Self {
        OrderingConfig {
            quantum_us: s.quantum_ms.max(1) * 1000,
            linger: s.linger_windows,
            max_open: s.max_open.max(1),
        }
    }

    /// Arrival-clock time at which the bucket starting at `start` closes.
    #[inline]
    pub fn close_at(&self, start: u64) -> u64 {
        start.saturating_add(self.quantum_us.saturating_mul(u64::from(self.linger) + 1))
    }
}

#[inline]
pub fn bucket_start(t: u64, quantum: u64) -> u64 {
    debug_assert!(quantum > 0);
    t - t % quantum
}

#[derive(Debug)]
pub struct QuantumBucket<T> {
    pub start: u64,
    pub quantum: u64,
    pub records: Vec<T>,
}

impl<T> QuantumBucket<T> {
    pub fn end(&self) -> u64 {
        self.start + self.quantum
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum Routed<T> {
    Placed,
    /// Too late; the record is handed back so its slot can be reclaimed.
    Delinquent(T),
}

pub struct OrderingState<T> {
    cfg: OrderingConfig,
    buckets: VecDeque<QuantumBucket<T>>,
    // Buckets closed early by the max_open bound, awaiting the next expire.
    forced: Vec<QuantumBucket<T>>,
    watermark: u64,
    delinquent: u64,
}

impl<T: Timed> OrderingState<T> {
    pub fn new(cfg: OrderingConfig) -> Self {
        assert!(cfg.quantum_us > 0, "quantum must be positive");
        OrderingState { cfg, buckets: VecDeque::new(), forced: Vec::new(), watermark: 0, delinquent: 0 }
    }

    /// Starts with records before `watermark` already considered late, e.g.
    /// when resuming after records up to that time were stored.
    pub fn with_watermark(cfg: OrderingConfig, watermark: u64) -> Self {
        let mut s = Self::new(cfg);
        s.watermark = watermark;
        s
    }

    pub fn config(&self) -> &OrderingConfig {
        &self.cfg
    }

    pub fn watermark(&self) -> u64 {
        self.watermark
    }

    pub fn delinquent_count(&self) -> u64 {
        self.delinquent
    }

    pub fn open_buckets(&self) -> usize {
        self.buckets.len()
    }

    pub fn pending_records(&self) -> usize {
        self.buckets.iter().chain(&self.forced).map(|b| b.records.len()).sum()
    }

    /// Starts of the open buckets, oldest first.
    pub fn open_starts(&self) -> Vec<u64> {
        self.buckets.iter().map(|b| b.start).collect()
    }

    /// Earliest arrival time at which `expire` will close something.
    pub fn next_deadline(&self) -> Option<u64> {
        if !self.forced.is_empty() {
            return Some(0);
        }
        self.buckets.front().map(|b| self.cfg.close_at(b.start))
    }

    pub fn route(&mut self, item: T) -> Routed<T> {
        let q = self.cfg.quantum_us;
        let start = bucket_start(item.time_key(), q);
        if start < self.watermark {
            self.delinquent += 1;
            return Routed::Delinquent(item);
        }
        // Records are nearly in order, so the newest bucket is the usual hit.
        match self.buckets.back_mut() {
            Some(b) if b.start == start => {
                b.records.push(item);
                return Routed::Placed;
            }
            Some(b) if b.start < start => {
                self.buckets.push_back(QuantumBucket { start, quantum: q, records: vec![item] });
            }
            None => self.buckets.push_back(QuantumBucket { start, quantum: q, records: vec![item] }),
            Some(_) => match self.buckets.binary_search_by_key(&start, |b| b.start) {
                Ok(i) => {
                    self.buckets[i].records.push(item);
                    return Routed::Placed;
                }
                Err(i) => self.buckets.insert(i, QuantumBucket { start, quantum: q, records: vec![item] }),
            },
        }
        while self.buckets.len() > self.cfg.max_open {
            let b = self.buckets.pop_front().expect("non-empty");
            self.watermark = self.watermark.max(b.end());
            self.forced.push(b);
        }
        Routed::Placed
    }

    /// Closes every bucket whose window ended at least `linger` quanta
    /// before `now`, oldest first, and advances the watermark.
    pub fn expire(&mut self, now: u64) -> Vec<QuantumBucket<T>> {
        let mut out = std::mem::take(&mut self.forced);
        while let Some(b) = self.buckets.front() {
            if self.cfg.close_at(b.start) > now {
                break;
            }
            let b = self.buckets.pop_front().expect("non-empty");
            self.watermark = self.watermark.max(b.end());
            out.push(b);
        }
        out
    }

    /// Closes all open buckets regardless of time (used at shutdown).
    pub fn drain(&mut self) -> Vec<QuantumBucket<T>> {
        self.expire(u64::MAX)
    }
}

/// Stable insertion sort by time key. Returns the number of key
/// comparisons, which is n-1 for already-sorted input.
pub fn insertion_sort<T: Timed>(items: &mut [T]) -> u64 {
    let mut comparisons = 0u64;
    for i in 1..items.len() {
        let key = items[i].time_key();
        let mut pos = i;
        while pos > 0 {
            comparisons += 1;
            if items[pos - 1].time_key() > key {
                pos -= 1;
            } else {
                break;
            }
        }
        if pos != i {
            items[pos..=i].rotate_right(1);
        }
    }
    comparisons
}

/// Receives closed, sorted buckets.
pub trait BatchSink<T> {
    type Error;
    fn append_sorted(&mut self, batch: Vec<T>) -> Result<usize, Self::Error>;
}

/// Sorts a closed bucket and appends it to `sink` as one batch.
pub fn sort_and_store<T: Timed, S: BatchSink<T>>(mut bucket: QuantumBucket<T>, sink: &mut S) -> Result<usize, S::Error> {
    insertion_sort(&mut bucket.records);
    sink.append_sorted(bucket.records)
}

impl<T> BatchSink<T> for Vec<T> {
    type Error = std::convert::Infallible;
    fn append_sorted(&mut self, batch: Vec<T>) -> Result<usize, Self::Error> {
        let n = batch.len();
        self.extend(batch);
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Q: u64 = 100_000;

    fn state() -> OrderingState<u64> {
        OrderingState::new(OrderingConfig { quantum_us: Q, linger: 2, max_open: 16 })
    }

    #[test]
    fn bucket_start_floor() {
        assert_eq!(bucket_start(946_684_800_123_456, 100_000), 946_684_800_100_000);
        assert_eq!(bucket_start(946_684_800_100_000, 100_000), 946_684_800_100_000);
        assert_eq!(bucket_start(946_684_800_123_457, 1), 946_684_800_123_457);
    }

    #[test]
    fn route_creates_bucket_on_demand() {
        let mut s = state();
        assert_eq!(s.route(5 * Q + 10), Routed::Placed);
        assert_eq!(s.open_starts(), vec![5 * Q]);
        assert_eq!(s.route(5 * Q + 3), Routed::Placed);
        assert_eq!(s.open_buckets(), 1);
        let closed = s.drain();
        assert_eq!(closed[0].records, vec![5 * Q + 10, 5 * Q + 3]);
    }

    #[test]
    fn closed_window_makes_records_delinquent() {
        let mut s = state();
        s.route(Q + 1);
        let closed = s.expire(10 * Q);
        assert_eq!(closed.len(), 1);
        assert_eq!(s.watermark(), 2 * Q);
        assert_eq!(s.route(Q + 50), Routed::Delinquent(Q + 50));
        assert_eq!(s.delinquent_count(), 1);
        // A later window is still fine, and so is a gap window above the watermark.
        assert_eq!(s.route(4 * Q), Routed::Placed);
        assert_eq!(s.route(2 * Q), Routed::Placed);
        assert_eq!(s.open_starts(), vec![2 * Q, 4 * Q]);
    }

    #[test]
    fn open_window_is_kept() {
        let mut s = state();
        s.route(3 * Q + 5);
        assert!(s.expire(3 * Q + 50).is_empty());
        assert!(s.expire(6 * Q - 1).is_empty());
        assert_eq!(s.expire(6 * Q).len(), 1);
    }

    #[test]
    fn expire_in_queue_order() {
        let mut s = state();
        for start in [2 * Q, 0, Q] {
            s.route(start + 1);
        }
        let closed = s.expire(2 * Q + 2 * Q);
        assert_eq!(closed.iter().map(|b| b.start).collect::<Vec<_>>(), vec![0, Q]);
        assert_eq!(s.open_starts(), vec![2 * Q]);
    }

    #[test]
    fn max_open_forces_oldest_closed() {
        let mut s = OrderingState::new(OrderingConfig { quantum_us: Q, linger: 2, max_open: 2 });
        s.route(1);
        s.route(Q + 1);
        s.route(2 * Q + 1);
        assert_eq!(s.open_buckets(), 2);
        assert_eq!(s.watermark(), Q);
        assert_eq!(s.route(5), Routed::Delinquent(5));
        let closed = s.expire(0);
        assert_eq!(closed.len(), 1);
        assert_eq!(closed[0].start, 0);
    }

    #[test]
    fn insertion_sort_law() {
        let mut v = vec![3u64, 1, 2, 4];
        insertion_sort(&mut v);
        assert_eq!(v, vec![1, 2, 3, 4]);

        let mut sorted: Vec<u64> = (0..10_000).collect();
        assert_eq!(insertion_sort(&mut sorted), 9_999);
        assert_eq!(sorted, (0..10_000).collect::<Vec<_>>());
    }

    #[test]
    fn insertion_sort_is_stable() {
        let mut v = vec![(5u64, 'a'), (1, 'x'), (5, 'b'), (5, 'c'), (2, 'y')];
        insertion_sort(&mut v);
        assert_eq!(v, vec![(1, 'x'), (2, 'y'), (5, 'a'), (5, 'b'), (5, 'c')]);
    }

    #[test]
    fn sort_and_store_appends_one_batch() {
        let bucket = QuantumBucket { start: 0, quantum: Q, records: vec![3u64, 1, 2, 4] };
        let mut sink = Vec::new();
        assert_eq!(sort_and_store(bucket, &mut sink).unwrap(), 4);
        assert_eq!(sink, vec![1, 2, 3, 4]);
    }

    proptest! {
        #[test]
        fn sorts_like_std_stable(v in proptest::collection::vec((0u64..50, any::<u16>()), 0..200)) {
            let mut ours = v.clone();
            insertion_sort(&mut ours);
            let mut reference = v;
            reference.sort_by_key(|x| x.0);
            prop_assert_eq!(ours, reference);
        }

        #[test]
        fn watermark_monotone_and_store_ordered(
            arrivals in proptest::collection::vec((0u64..50 * Q, 0u64..6 * Q), 1..300)
        ) {
            // (timestamp, delay): arrival time is timestamp + delay.
            let mut events: Vec<(u64, u64)> = arrivals.iter().map(|&(t, d)| (t + d, t)).collect();
            events.sort();
            let mut s = state();
            let mut store = Vec::new();
            let mut last_wm = 0;
            for (arrive, t) in events {
                for b in s.expire(arrive) {
                    sort_and_store(b, &mut store).unwrap();
                }
                let _ = s.route(t);
                prop_assert!(s.watermark() >= last_wm);
                last_wm = s.watermark();
            }
            for b in s.drain() {
                sort_and_store(b, &mut store).unwrap();
            }
            prop_assert!(store.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(store.len() as u64 + s.delinquent_count(), arrivals.len() as u64);
        }
    }
}
