//! Static augmented interval tree over a sorted run of index entries.
//!
//! The tree is implicit: the node for a slice `[lo, hi)` is its midpoint,
//! with the two halves as subtrees, so the array itself is a balanced BST
//! keyed by interval start. Each node also records the largest interval end
//! in its subtree, which lets an overlap query skip whole subtrees.

/// One indexed run: records `[start, end)` share an instance of the list's
/// granularity; `ctime` is the composite time of the first record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub start: u64,
    pub end: u64,
    pub ctime: u64,
}

#[derive(Debug, Default)]
pub struct Chunk {
    starts: Vec<u64>,
    ends: Vec<u64>,
    ctimes: Vec<u64>,
    max_end: Vec<u64>,
}

impl Chunk {
    /// Builds from `(start, ctime)` pairs with ascending starts. Each run
    /// ends where the next begins; the last ends at `last_end`.
    pub fn build(entries: &[(u64, u64)], last_end: u64) -> Self {
        let n = entries.len();
        let starts: Vec<u64> = entries.iter().map(|e| e.0).collect();
        let ctimes = entries.iter().map(|e| e.1).collect();
        let ends: Vec<u64> = (0..n).map(|i| if i + 1 < n { starts[i + 1] } else { last_end }).collect();
        let mut max_end = vec![0; n];
        fill_max(&ends, &mut max_end, 0, n);
        Chunk { starts, ends, ctimes, max_end }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn first_start(&self) -> Option<u64> {
        self.starts.first().copied()
    }

    pub fn last_end(&self) -> Option<u64> {
        self.ends.last().copied()
    }

    pub fn run(&self, i: usize) -> Run {
        Run { start: self.starts[i], end: self.ends[i], ctime: self.ctimes[i] }
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.starts.iter().copied().zip(self.ctimes.iter().copied())
    }

    pub fn footprint_bytes(&self) -> usize {
        4 * 8 * self.starts.capacity()
    }

    /// Calls `f` for every run overlapping `[lo, hi)`, in start order.
    pub fn overlapping(&self, lo: u64, hi: u64, f: &mut impl FnMut(Run)) {
        if lo < hi {
            self.query(0, self.len(), lo, hi, f);
        }
    }

    fn query(&self, a: usize, b: usize, lo: u64, hi: u64, f: &mut impl FnMut(Run)) {
        if a >= b {
            return;
        }
        let mid = a + (b - a) / 2;
        if self.max_end[mid] <= lo {
            return;
        }
        self.query(a, mid, lo, hi, f);
        if self.starts[mid] >= hi {
            return;
        }
        if self.ends[mid] > lo {
            f(self.run(mid));
        }
        self.query(mid + 1, b, lo, hi, f);
    }
}

fn fill_max(ends: &[u64], max_end: &mut [u64], a: usize, b: usize) -> u64 {
    if a >= b {
        return 0;
    }
    let mid = a + (b - a) / 2;
    let m = ends[mid].max(fill_max(ends, max_end, a, mid)).max(fill_max(ends, max_end, mid + 1, b));
    max_end[mid] = m;
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(c: &Chunk, lo: u64, hi: u64) -> Vec<Run> {
        (0..c.len()).map(|i| c.run(i)).filter(|r| r.start < hi && r.end > lo && lo < hi).collect()
    }

    #[test]
    fn small_example() {
        let c = Chunk::build(&[(0, 10), (5, 11), (9, 12)], 20);
        let mut got = Vec::new();
        c.overlapping(4, 6, &mut |r| got.push(r.start));
        assert_eq!(got, vec![0, 5]);
        got.clear();
        c.overlapping(20, 30, &mut |r| got.push(r.start));
        assert!(got.is_empty());
        assert_eq!(c.last_end(), Some(20));
    }

    proptest! {
        #[test]
        fn matches_brute_force(gaps in prop::collection::vec(1u64..50, 1..300), tail in 1u64..50, lo in 0u64..8000, len in 0u64..3000) {
            let mut s = 0;
            let entries: Vec<(u64, u64)> = gaps.iter().map(|g| { let e = (s, s * 3); s += g; e }).collect();
            let c = Chunk::build(&entries, s + tail);
            let mut got = Vec::new();
            c.overlapping(lo, lo + len, &mut |r| got.push(r));
            prop_assert_eq!(got, brute(&c, lo, lo + len));
        }
    }
}
