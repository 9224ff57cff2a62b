use std::cell::{Cell, RefCell};
use std::sync::{Mutex, PoisonError};

use serde::{Deserialize, Serialize};

use crate::domain::{ObjectId, TaskSpec};
use crate::time::SimClock;

/// Identity of the code touching the pool, checked against its declared
/// access list in debug builds.
#[derive(Debug, Clone, Copy)]
pub struct Caller<'a> {
    task: Option<&'a TaskSpec>,
}

impl<'a> Caller<'a> {
    pub fn task(spec: &'a TaskSpec) -> Self {
        Self { task: Some(spec) }
    }

    /// Startup, shutdown and reporting code outside any task.
    pub fn system() -> Caller<'static> {
        Caller { task: None }
    }

    pub fn name(&self) -> &str {
        self.task.map_or("system", |t| t.name.as_str())
    }

    pub fn allows(&self, id: &ObjectId) -> bool {
        self.task.is_none_or(|t| t.may_access(id))
    }

    #[track_caller]
    pub(crate) fn check(&self, id: &ObjectId) {
        if cfg!(debug_assertions) && !self.allows(id) {
            panic!("{} accessed {id} without declaring it", self.name());
        }
    }
}

/// Called around every protected access so the threaded executor can run
/// the holder at the object's ceiling priority.
pub trait CeilingHook {
    fn enter(&self, ceiling: u8);
    fn exit(&self);
}

thread_local! {
    static HOOK: RefCell<Option<Box<dyn CeilingHook>>> = const { RefCell::new(None) };
    static HELD: Cell<u32> = const { Cell::new(0) };
}

pub fn install_ceiling_hook(hook: Box<dyn CeilingHook>) {
    HOOK.with(|h| *h.borrow_mut() = Some(hook));
}

pub fn clear_ceiling_hook() {
    HOOK.with(|h| *h.borrow_mut() = None);
}

/// Protected objects currently held by this thread.
pub fn locks_held() -> u32 {
    HELD.with(Cell::get)
}

/// Runs `f` as a protected operation on an object with `ceiling`.
#[track_caller]
pub(crate) fn protected<R>(id: &ObjectId, ceiling: u8, f: impl FnOnce() -> R) -> R {
    let held = HELD.with(Cell::get);
    if cfg!(debug_assertions) && held != 0 {
        panic!("nested protected access to {id}");
    }
    HELD.with(|h| h.set(held + 1));
    HOOK.with(|h| {
        if let Some(h) = h.borrow().as_ref() {
            h.enter(ceiling)
        }
    });
    struct Release;
    impl Drop for Release {
        fn drop(&mut self) {
            HOOK.with(|h| {
                if let Some(h) = h.borrow().as_ref() {
                    h.exit()
                }
            });
            HELD.with(|h| h.set(h.get().saturating_sub(1)));
        }
    }
    let _r = Release;
    f()
}

/// A value with the mission time of its last write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<V> {
    pub value: V,
    pub timestamp_ms: u64,
    pub write_count: u64,
}

/// Latest-value cell under ceiling-priority mutual exclusion.
pub struct ProtectedCell<V> {
    id: ObjectId,
    ceiling: u8,
    clock: SimClock,
    inner: Mutex<Stamped<V>>,
}

impl<V: std::fmt::Debug> std::fmt::Debug for ProtectedCell<V> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProtectedCell")
            .field("id", &self.id)
            .field("ceiling", &self.ceiling)
            .field(
                "state",
                &*self.inner.lock().unwrap_or_else(PoisonError::into_inner),
            )
            .finish()
    }
}

impl<V: Clone> ProtectedCell<V> {
    pub fn new(id: ObjectId, ceiling: u8, clock: SimClock, initial: V) -> Self {
        Self {
            id,
            ceiling,
            clock,
            inner: Mutex::new(Stamped {
                value: initial,
                timestamp_ms: 0,
                write_count: 0,
            }),
        }
    }

    pub fn id(&self) -> &ObjectId {
        &self.id
    }

    pub fn ceiling(&self) -> u8 {
        self.ceiling
    }

    #[track_caller]
    pub fn read(&self, caller: &Caller<'_>) -> Stamped<V> {
        caller.check(&self.id);
        protected(&self.id, self.ceiling, || {
            self.inner
                .lock()
                .unwrap_or_else(PoisonError::into_inner)
                .clone()
        })
    }

    #[track_caller]
    pub fn get(&self, caller: &Caller<'_>) -> V {
        self.read_with(caller, V::clone)
    }

    #[track_caller]
    pub fn read_with<R>(&self, caller: &Caller<'_>, f: impl FnOnce(&V) -> R) -> R {
        caller.check(&self.id);
        protected(&self.id, self.ceiling, || {
            f(&self
                .inner
                .lock()
                .unwrap_or_else(PoisonError::into_inner)
                .value)
        })
    }

    #[track_caller]
    pub fn write(&self, caller: &Caller<'_>, value: V) {
        self.update(caller, |v| *v = value)
    }

    /// Read-modify-write as one protected operation; counts as a write.
    #[track_caller]
    pub fn update<R>(&self, caller: &Caller<'_>, f: impl FnOnce(&mut V) -> R) -> R {
        caller.check(&self.id);
        let now = self.clock.now_ms();
        protected(&self.id, self.ceiling, || {
            let mut g = self.inner.lock().unwrap_or_else(PoisonError::into_inner);
            let r = f(&mut g.value);
            g.timestamp_ms = now;
            g.write_count += 1;
            r
        })
    }
}
