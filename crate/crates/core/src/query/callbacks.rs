//! Notifications when a table has received a given number of new records.
//!
//! Callbacks run on the committing sorter thread right after a batch
//! becomes visible to readers, at most once per batch and subscription.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, Weak};

use crate::ctime::EpochMicros;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateEvent {
    pub partition: u16,
    /// Records committed to the table so far, including this batch.
    pub inserted_total: u64,
    pub batch_len: usize,
    /// Primary time of the newest record in the batch.
    pub batch_max_time: EpochMicros,
    /// Wall-clock time at which the batch became visible.
    pub committed_at: EpochMicros,
}

type Action = Arc<dyn Fn(&UpdateEvent) + Send + Sync>;

struct Sub {
    id: u64,
    every_n: u64,
    action: Action,
}

#[derive(Default)]
pub struct CallbackRegistry {
    inserted: AtomicU64,
    next_id: AtomicU64,
    subs: Mutex<Vec<Sub>>,
}

/// Handle returned by [`CallbackRegistry::register`]. Dropping it keeps the
/// callback registered; call [`Subscription::unsubscribe`] to remove it.
pub struct Subscription {
    id: u64,
    registry: Weak<CallbackRegistry>,
}

impl Subscription {
    pub fn unsubscribe(self) {
        if let Some(r) = self.registry.upgrade() {
            r.subs.lock().unwrap().retain(|s| s.id != self.id);
        }
    }
}

impl CallbackRegistry {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Calls `action` whenever a committed batch moves the insert count
    /// across a multiple of `every_n` (clamped to at least 1).
    pub fn register(self: &Arc<Self>, every_n: u64, action: impl Fn(&UpdateEvent) + Send + Sync + 'static) -> Subscription {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        self.subs.lock().unwrap().push(Sub { id, every_n: every_n.max(1), action: Arc::new(action) });
        Subscription { id, registry: Arc::downgrade(self) }
    }

    pub fn inserted(&self) -> u64 {
        self.inserted.load(Ordering::Acquire)
    }

    pub fn subscriber_count(&self) -> usize {
        self.subs.lock().unwrap().len()
    }

    /// Records a committed batch and fires the callbacks it triggers.
    pub fn on_commit(&self, partition: u16, batch_len: usize, batch_max_time: EpochMicros) {
        if batch_len == 0 {
            return;
        }
        let before = self.inserted.fetch_add(batch_len as u64, Ordering::AcqRel);
        let after = before + batch_len as u64;
        let due: Vec<Action> = {
            let subs = self.subs.lock().unwrap();
            subs.iter().filter(|s| after / s.every_n > before / s.every_n).map(|s| s.action.clone()).collect()
        };
        if due.is_empty() {
            return;
        }
        let ev = UpdateEvent { partition, inserted_total: after, batch_len, batch_max_time, committed_at: EpochMicros::now() };
        for a in due {
            a(&ev);
        }
    }
}
