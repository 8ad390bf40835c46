//! Bounded lock-free single-producer single-consumer ring.
//!
//! The ring is split into a [`Producer`] and a [`Consumer`] half; neither is
//! `Clone`, so the single-producer/single-consumer discipline is enforced by
//! ownership. Each half caches the other side's index and only reloads it
//! when the cached value says the ring is full (or empty).

use std::cell::UnsafeCell;
use std::mem::MaybeUninit;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crossbeam_utils::CachePadded;

struct Ring<T> {
    buf: Box<[UnsafeCell<MaybeUninit<T>>]>,
    mask: usize,
    // Next slot to write; only the producer stores it.
    head: CachePadded<AtomicUsize>,
    // Next slot to read; only the consumer stores it.
    tail: CachePadded<AtomicUsize>,
}

// Slots are handed between exactly two threads through the head/tail
// release-acquire pairs.
unsafe impl<T: Send> Send for Ring<T> {}
unsafe impl<T: Send> Sync for Ring<T> {}

impl<T> Drop for Ring<T> {
    fn drop(&mut self) {
        let head = *self.head.get_mut();
        let mut tail = *self.tail.get_mut();
        while tail != head {
            // SAFETY: slots in [tail, head) were written and never read.
            unsafe { (*self.buf[tail & self.mask].get()).assume_init_drop() };
            tail = tail.wrapping_add(1);
        }
    }
}

pub struct Producer<T> {
    ring: Arc<Ring<T>>,
    head: usize,
    cached_tail: usize,
}

pub struct Consumer<T> {
    ring: Arc<Ring<T>>,
    tail: usize,
    cached_head: usize,
}

/// Creates a ring holding at least `capacity` items (rounded up to a power
/// of two, minimum 2).
pub fn channel<T>(capacity: usize) -> (Producer<T>, Consumer<T>) {
    let cap = capacity.max(2).next_power_of_two();
    let buf = (0..cap).map(|_| UnsafeCell::new(MaybeUninit::uninit())).collect();
    let ring = Arc::new(Ring {
        buf,
        mask: cap - 1,
        head: CachePadded::new(AtomicUsize::new(0)),
        tail: CachePadded::new(AtomicUsize::new(0)),
    });
    (
        Producer { ring: ring.clone(), head: 0, cached_tail: 0 },
        Consumer { ring, tail: 0, cached_head: 0 },
    )
}

impl<T> Producer<T> {
    pub fn capacity(&self) -> usize {
        self.ring.mask + 1
    }

    /// Pushes an item, handing it back if the ring is full.
    pub fn push(&mut self, item: T) -> Result<(), T> {
        let cap = self.capacity();
        if self.head.wrapping_sub(self.cached_tail) == cap {
            self.cached_tail = self.ring.tail.load(Ordering::Acquire);
            if self.head.wrapping_sub(self.cached_tail) == cap {
                return Err(item);
            }
        }
        // SAFETY: the slot is outside [tail, head), so the consumer is not
        // reading it, and we are the only writer.
        unsafe { (*self.ring.buf[self.head & self.ring.mask].get()).write(item) };
        self.head = self.head.wrapping_add(1);
        self.ring.head.store(self.head, Ordering::Release);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.head.wrapping_sub(self.ring.tail.load(Ordering::Acquire))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<T> Consumer<T> {
    pub fn capacity(&self) -> usize {
        self.ring.mask + 1
    }

    pub fn pop(&mut self) -> Option<T> {
        if self.tail == self.cached_head {
            self.cached_head = self.ring.head.load(Ordering::Acquire);
            if self.tail == self.cached_head {
                return None;
            }
        }
        // SAFETY: the slot is inside [tail, head): written by the producer
        // and published by the acquire load above.
        let item = unsafe { (*self.ring.buf[self.tail & self.ring.mask].get()).assume_init_read() };
        self.tail = self.tail.wrapping_add(1);
        self.ring.tail.store(self.tail, Ordering::Release);
        Some(item)
    }

    pub fn len(&self) -> usize {
        self.ring.head.load(Ordering::Acquire).wrapping_sub(self.tail)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True once the producer half has been dropped.
    pub fn is_abandoned(&self) -> bool {
        Arc::strong_count(&self.ring) == 1
    }
}
