//! Exchange queues between pipeline stages, SPSC or MPMC.

use std::sync::Arc;

use crossbeam_queue::ArrayQueue;

use super::spsc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QueueDiscipline {
    #[default]
    Spsc,
    Mpmc,
}

impl std::str::FromStr for QueueDiscipline {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "spsc" => Ok(QueueDiscipline::Spsc),
            "mpmc" => Ok(QueueDiscipline::Mpmc),
            other => Err(format!("unknown queue discipline '{other}'")),
        }
    }
}

pub enum QueueTx<T> {
    Spsc(spsc::Producer<T>),
    Mpmc(Arc<ArrayQueue<T>>),
}

pub enum QueueRx<T> {
    Spsc(spsc::Consumer<T>),
    Mpmc(Arc<ArrayQueue<T>>),
}

/// Outcome of [`QueueTx::enqueue`].
#[derive(Debug, PartialEq, Eq)]
pub enum Enqueued<T> {
    Accepted,
    /// Queue full; the item is handed back.
    Backpressure(T),
}

pub fn bounded<T>(discipline: QueueDiscipline, capacity: usize) -> (QueueTx<T>, QueueRx<T>) {
    match discipline {
        QueueDiscipline::Spsc => {
            let (tx, rx) = spsc::channel(capacity);
            (QueueTx::Spsc(tx), QueueRx::Spsc(rx))
        }
        QueueDiscipline::Mpmc => {
            let q = Arc::new(ArrayQueue::new(capacity.max(1)));
            (QueueTx::Mpmc(q.clone()), QueueRx::Mpmc(q))
        }
    }
}

impl<T> QueueTx<T> {
    #[inline]
    pub fn enqueue(&mut self, item: T) -> Enqueued<T> {
        let r = match self {
            QueueTx::Spsc(p) => p.push(item),
            QueueTx::Mpmc(q) => q.push(item),
        };
        match r {
            Ok(()) => Enqueued::Accepted,
            Err(item) => Enqueued::Backpressure(item),
        }
    }

    /// Another producer handle; only MPMC queues have more than one.
    pub fn try_clone(&self) -> Option<Self> {
        match self {
            QueueTx::Spsc(_) => None,
            QueueTx::Mpmc(q) => Some(QueueTx::Mpmc(q.clone())),
        }
    }

    pub fn capacity(&self) -> usize {
        match self {
            QueueTx::Spsc(p) => p.capacity(),
            QueueTx::Mpmc(q) => q.capacity(),
        }
    }
}

impl<T> QueueRx<T> {
    #[inline]
    pub fn dequeue(&mut self) -> Option<T> {
        match self {
            QueueRx::Spsc(c) => c.pop(),
            QueueRx::Mpmc(q) => q.pop(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            QueueRx::Spsc(c) => c.len(),
            QueueRx::Mpmc(q) => q.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
