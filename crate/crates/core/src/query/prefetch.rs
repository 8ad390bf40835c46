//! Main-memory cache of a plan's candidate ranges.
//!
//! Extents are copies of contiguous record runs. An extent is served only
//! while its first record is still live, so a cached copy always equals
//! what storage holds; once roll-around reaches it the extent is dropped.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use super::plan::{partition_ranges, QueryPlan};
use super::table::LogicalTable;
use super::QueryError;

#[derive(Default)]
struct Inner {
    used: usize,
    parts: HashMap<u16, BTreeMap<u64, Arc<Vec<u8>>>>,
}

pub struct PrefetchCache {
    budget: usize,
    record_size: usize,
    inner: Mutex<Inner>,
    hits: AtomicU64,
    invalidations: AtomicU64,
}

impl PrefetchCache {
    pub fn new(budget_bytes: usize, record_size: usize) -> Arc<Self> {
        Arc::new(PrefetchCache { budget: budget_bytes, record_size, inner: Mutex::default(), hits: AtomicU64::new(0), invalidations: AtomicU64::new(0) })
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn used_bytes(&self) -> usize {
        self.inner.lock().unwrap().used
    }

    /// Blocks served from memory.
    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    /// Extents dropped because roll-around overwrote them.
    pub fn invalidations(&self) -> u64 {
        self.invalidations.load(Ordering::Relaxed)
    }

    /// The extent holding `seq`, if cached and still entirely live.
    pub fn lookup(&self, part: u16, seq: u64, live_floor: u64) -> Option<(u64, Arc<Vec<u8>>)> {
        let mut g = self.inner.lock().unwrap();
        let inner = &mut *g;
        let map = inner.parts.get_mut(&part)?;
        // Drop extents roll-around has reached.
        while let Some((&s, _)) = map.first_key_value() {
            if s >= live_floor {
                break;
            }
            let (_, d) = map.pop_first().unwrap();
            inner.used -= d.len();
            self.invalidations.fetch_add(1, Ordering::Relaxed);
        }
        let (&s, d) = map.range(..=seq).next_back()?;
        if seq >= s + (d.len() / self.record_size) as u64 {
            return None;
        }
        self.hits.fetch_add(1, Ordering::Relaxed);
        Some((s, d.clone()))
    }

    /// Materializes the plan's ranges, oldest first, until the budget is
    /// spent. Returns the bytes added.
    pub fn fill(&self, table: &LogicalTable, plan: &QueryPlan) -> Result<usize, QueryError> {
        let rs = self.record_size;
        let mut added = 0;
        for p in &table.table.partitions {
            for r in partition_ranges(plan, p)? {
                let room = self.budget.saturating_sub(self.used_bytes()) / rs;
                if room == 0 {
                    return Ok(added);
                }
                let n = (r.end - r.start).min(room as u64);
                if self.covered(p.id, r.start, n) {
                    continue;
                }
                let mut buf = Vec::new();
                match p.store.read_range(r.start, n, &mut buf) {
                    Ok(()) => {}
                    // Overwritten while planning; nothing worth caching.
                    Err(crate::store::StoreError::NotLive { .. }) => continue,
                    Err(e) => return Err(e.into()),
                }
                let mut g = self.inner.lock().unwrap();
                g.used += buf.len();
                added += buf.len();
                g.parts.entry(p.id).or_default().insert(r.start, Arc::new(buf));
            }
        }
        Ok(added)
    }

    fn covered(&self, part: u16, start: u64, n: u64) -> bool {
        let g = self.inner.lock().unwrap();
        let Some(map) = g.parts.get(&part) else { return false };
        map.range(..=start).next_back().is_some_and(|(&s, d)| s + (d.len() / self.record_size) as u64 >= start + n)
    }

    pub fn clear(&self) {
        let mut g = self.inner.lock().unwrap();
        g.parts.clear();
        g.used = 0;
    }
}

/// Creates a cache for `table` and fills it with the plan's ranges.
pub fn prefetch(table: &LogicalTable, plan: &QueryPlan, budget_bytes: usize) -> Result<Arc<PrefetchCache>, QueryError> {
    let c = PrefetchCache::new(budget_bytes, table.schema().record_size());
    c.fill(table, plan)?;
    Ok(c)
}
