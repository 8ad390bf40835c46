//! Fixed-size record slots preallocated in one buffer.
//!
//! A [`SlotHandle`] is the only way to reach a slot's bytes and it is neither
//! `Clone` nor `Copy`, so each slot has exactly one owner at a time: the
//! producer until it is enqueued, then whichever stage holds the handle,
//! until [`Slab::free`] consumes it. The free list is a lock-free bounded
//! queue of slot indices.

use std::cell::UnsafeCell;
use std::sync::atomic::{AtomicU32, Ordering};

use crossbeam_queue::ArrayQueue;

use crate::ctime::EpochMicros;
use crate::ordering::Timed;

static NEXT_SLAB_ID: AtomicU32 = AtomicU32::new(1);

pub struct Slab {
    id: u32,
    slot_size: usize,
    capacity: usize,
    mem: Box<[UnsafeCell<u8>]>,
    free: ArrayQueue<u32>,
}

// Slot bytes are only reached through a uniquely owned handle.
unsafe impl Sync for Slab {}
unsafe impl Send for Slab {}

/// Owned reference to one slab slot plus its ordering key.
#[derive(Debug)]
pub struct SlotHandle {
    slab: u32,
    index: u32,
    time: EpochMicros,
}

impl SlotHandle {
    pub fn time(&self) -> EpochMicros {
        self.time
    }

    pub fn set_time(&mut self, t: EpochMicros) {
        self.time = t;
    }

    pub fn index(&self) -> u32 {
        self.index
    }
}

impl Timed for SlotHandle {
    fn time_key(&self) -> u64 {
        self.time.0
    }
}

impl Slab {
    pub fn new(slot_size: usize, capacity: usize) -> Self {
        assert!(slot_size > 0 && capacity > 0 && capacity <= u32::MAX as usize);
        let free = ArrayQueue::new(capacity);
        for i in 0..capacity as u32 {
            free.push(i).expect("sized to capacity");
        }
        Slab {
            id: NEXT_SLAB_ID.fetch_add(1, Ordering::Relaxed),
            slot_size,
            capacity,
            mem: (0..slot_size * capacity).map(|_| UnsafeCell::new(0)).collect(),
            free,
        }
    }

    pub fn slot_size(&self) -> usize {
        self.slot_size
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    /// Bytes held by the slot buffer and its free list.
    pub fn footprint_bytes(&self) -> usize {
        self.mem.len() + self.capacity * std::mem::size_of::<u32>()
    }

    pub fn alloc(&self) -> Option<SlotHandle> {
        self.free.pop().map(|index| SlotHandle { slab: self.id, index, time: EpochMicros(0) })
    }

    pub fn free(&self, h: SlotHandle) {
        self.check(&h);
        // Cannot overflow: there are never more live handles than slots.
        let _ = self.free.push(h.index);
    }

    #[inline]
    fn check(&self, h: &SlotHandle) {
        assert_eq!(h.slab, self.id, "slot handle used with a different slab");
    }

    #[inline]
    fn base(&self) -> *mut u8 {
        // UnsafeCell<u8> has the layout of u8 and permits writes through
        // a shared reference.
        self.mem.as_ptr() as *mut u8
    }

    #[inline]
    pub fn bytes(&self, h: &SlotHandle) -> &[u8] {
        self.check(h);
        let start = h.index as usize * self.slot_size;
        // SAFETY: the range is in bounds and the handle is the slot's sole
        // owner; a shared borrow of the handle means no mutable view exists.
        unsafe { std::slice::from_raw_parts(self.base().add(start), self.slot_size) }
    }

    #[inline]
    #[allow(clippy::mut_from_ref)]
    pub fn bytes_mut(&self, h: &mut SlotHandle) -> &mut [u8] {
        self.check(h);
        let start = h.index as usize * self.slot_size;
        // SAFETY: as above; the exclusive borrow of the handle rules out any
        // other view of this slot.
        unsafe { std::slice::from_raw_parts_mut(self.base().add(start), self.slot_size) }
    }
}
