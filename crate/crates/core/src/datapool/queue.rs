use std::collections::VecDeque;
use std::sync::{Condvar, Mutex, PoisonError};
use std::time::Duration;

use serde::Serialize;

use super::cell::{protected, Caller};
use crate::domain::ObjectId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PutResult {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct QueueStats {
    pub len: usize,
    pub capacity: usize,
    pub accepted: u64,
    pub rejected: u64,
    pub taken: u64,
}

struct Inner<M> {
    items: VecDeque<M>,
    stats: QueueStats,
}

/// Protected FIFO of bounded capacity. A put on a full queue drops the new
/// message and counts it.
pub struct BoundedQueue<M> {
    id: ObjectId,
    ceiling: u8,
    inner: Mutex<Inner<M>>,
    ready: Condvar,
}

impl<M> std::fmt::Debug for BoundedQueue<M> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundedQueue")
            .field("id", &self.id)
            .field("stats", &self.stats())
            .finish()
    }
}

impl<M: Clone> BoundedQueue<M> {
    pub fn new(id: ObjectId, ceiling: u8, capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self {
            id,
            ceiling,
            inner: Mutex::new(Inner {
                items: VecDeque::with_capacity(capacity),
                stats: QueueStats {
                    capacity,
                    ..QueueStats::default()
                },
            }),
            ready: Condvar::new(),
        }
    }

    pub fn id(&self) -> &ObjectId {
        &self.id
    }

    pub fn ceiling(&self) -> u8 {
        self.ceiling
    }

    #[track_caller]
    pub fn put(&self, caller: &Caller<'_>, msg: M) -> PutResult {
        caller.check(&self.id);
        let r = protected(&self.id, self.ceiling, || {
            let mut g = self.inner.lock().unwrap_or_else(PoisonError::into_inner);
            if g.items.len() >= g.stats.capacity {
                g.stats.rejected += 1;
                PutResult::Rejected
            } else {
                g.items.push_back(msg);
                g.stats.accepted += 1;
                g.stats.len = g.items.len();
                PutResult::Accepted
            }
        });
        if r == PutResult::Accepted {
            self.ready.notify_all();
        }
        r
    }

    #[track_caller]
    pub fn try_take(&self, caller: &Caller<'_>) -> Option<M> {
        caller.check(&self.id);
        protected(&self.id, self.ceiling, || {
            let mut g = self.inner.lock().unwrap_or_else(PoisonError::into_inner);
            let m = g.items.pop_front();
            if m.is_some() {
                g.stats.taken += 1;
                g.stats.len = g.items.len();
            }
            m
        })
    }

    /// Blocks the calling thread until a message can be taken or `timeout`
    /// passes.
    #[track_caller]
    pub fn take_timeout(&self, caller: &Caller<'_>, timeout: Duration) -> Option<M> {
        if self.wait_pending(timeout) {
            self.try_take(caller)
        } else {
            None
        }
    }

    /// Messages currently queued, oldest first, without taking them.
    pub fn peek_all(&self) -> Vec<M> {
        self.inner
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .items
            .iter()
            .cloned()
            .collect()
    }
}

impl<M> BoundedQueue<M> {
    pub fn len(&self) -> usize {
        self.inner
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .items
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> QueueStats {
        self.inner
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .stats
    }

    pub fn overflows(&self) -> u64 {
        self.stats().rejected
    }

    /// Waits until the queue is non-empty. Returns whether it is.
    pub fn wait_pending(&self, timeout: Duration) -> bool {
        let g = self.inner.lock().unwrap_or_else(PoisonError::into_inner);
        let (g, _) = self
            .ready
            .wait_timeout_while(g, timeout, |i| i.items.is_empty())
            .unwrap();
        !g.items.is_empty()
    }

    /// Wakes every waiter without adding a message.
    pub fn notify(&self) {
        self.ready.notify_all();
    }
}
