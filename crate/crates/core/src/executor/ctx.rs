use std::future::Future;
use std::pin::Pin;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::task::{Context, Poll};
use std::time::Duration;

use async_trait::async_trait;

use crate::datapool::{BoundedQueue, Caller};
use crate::domain::TaskSpec;
use crate::time::{Delay, DelayFuture, SimClock};

/// One activation's worth of work. Bodies may await simulated delays
/// through the context but must not hold protected objects across them.
#[async_trait(?Send)]
pub trait TaskBody: Send {
    async fn run(&mut self, ctx: &TaskCtx);
}

/// Wraps a synchronous closure as a task body.
pub struct FnBody<F>(pub F);

#[async_trait(?Send)]
impl<F: FnMut(&TaskCtx) + Send> TaskBody for FnBody<F> {
    async fn run(&mut self, ctx: &TaskCtx) {
        (self.0)(ctx)
    }
}

pub fn body_fn<F: FnMut(&TaskCtx) + Send + 'static>(f: F) -> Box<dyn TaskBody> {
    Box::new(FnBody(f))
}

/// What releases a sporadic task.
pub trait ActivationSource: Send + Sync {
    fn pending(&self) -> bool;
    /// Blocks until `pending` may have become true or `timeout` passes.
    fn wait(&self, timeout: Duration) -> bool;
}

impl<M: Clone + Send> ActivationSource for BoundedQueue<M> {
    fn pending(&self) -> bool {
        !self.is_empty()
    }

    fn wait(&self, timeout: Duration) -> bool {
        self.wait_pending(timeout)
    }
}

pub(crate) const NO_WAKE: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CtxMode {
    Deterministic,
    Threaded,
}

#[derive(Debug)]
struct CtxShared {
    spec: TaskSpec,
    clock: SimClock,
    mode: CtxMode,
    wake_at: AtomicU64,
    activation: AtomicU64,
    release_ns: AtomicU64,
}

/// Handle a body uses to reach the clock and identify itself to the pool.
#[derive(Debug, Clone)]
pub struct TaskCtx {
    shared: Arc<CtxShared>,
}

impl TaskCtx {
    pub(crate) fn new(spec: TaskSpec, clock: SimClock, mode: CtxMode) -> Self {
        Self {
            shared: Arc::new(CtxShared {
                spec,
                clock,
                mode,
                wake_at: AtomicU64::new(NO_WAKE),
                activation: AtomicU64::new(0),
                release_ns: AtomicU64::new(0),
            }),
        }
    }

    /// A context outside any executor, for driving a body by hand. Delays
    /// advance (virtual) or sleep on (scaled) the clock directly.
    pub fn standalone(spec: TaskSpec, clock: SimClock) -> Self {
        Self::new(spec, clock, CtxMode::Threaded)
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.shared.spec
    }

    pub fn name(&self) -> &str {
        &self.shared.spec.name
    }

    pub fn caller(&self) -> Caller<'_> {
        Caller::task(&self.shared.spec)
    }

    pub fn clock(&self) -> &SimClock {
        &self.shared.clock
    }

    /// Index of the running activation, from 0.
    pub fn activation(&self) -> u64 {
        self.shared.activation.load(Ordering::Acquire)
    }

    pub fn release_ns(&self) -> u64 {
        self.shared.release_ns.load(Ordering::Acquire)
    }

    pub(crate) fn begin(&self, n: u64, release_ns: u64) {
        self.shared.activation.store(n, Ordering::Release);
        self.shared.release_ns.store(release_ns, Ordering::Release);
    }

    pub(crate) fn take_wake(&self) -> Option<u64> {
        match self.shared.wake_at.swap(NO_WAKE, Ordering::AcqRel) {
            NO_WAKE => None,
            t => Some(t),
        }
    }
}

impl Delay for TaskCtx {
    fn now_ns(&self) -> u64 {
        self.shared.clock.now_ns()
    }

    fn delay_ns(&self, ns: u64) -> DelayFuture<'_> {
        let target = self.now_ns().saturating_add(ns);
        match self.shared.mode {
            CtxMode::Threaded => {
                self.shared.clock.sleep_until_blocking(target);
                Box::pin(std::future::ready(()))
            }
            CtxMode::Deterministic => Box::pin(Sleep { ctx: self, target }),
        }
    }
}

/// Completes once the engine has moved virtual time to `target`.
struct Sleep<'a> {
    ctx: &'a TaskCtx,
    target: u64,
}

impl Future for Sleep<'_> {
    type Output = ();

    fn poll(self: Pin<&mut Self>, _: &mut Context<'_>) -> Poll<()> {
        if self.ctx.now_ns() >= self.target {
            Poll::Ready(())
        } else {
            self.ctx
                .shared
                .wake_at
                .store(self.target, Ordering::Release);
            Poll::Pending
        }
    }
}
