use std::cmp::Reverse;
use std::future::Future;
use std::pin::Pin;
use std::sync::Arc;
use std::task::{Context, Poll, Waker};

use super::ctx::{ActivationSource, CtxMode, TaskBody, TaskCtx};
use super::trace::{TraceAction, TraceSink};
use super::{ExecError, Ledger, Registered};
use crate::datapool::locks_held;
use crate::domain::TaskKind;
use crate::time::{SimClock, NS_PER_MS};

type JobFuture = Pin<Box<dyn Future<Output = Box<dyn TaskBody>>>>;

struct Job {
    fut: JobFuture,
    n: u64,
    release_ns: u64,
    start_ns: Option<u64>,
    blocked_until: Option<u64>,
}

struct Slot {
    name: String,
    priority: u8,
    kind: TaskKind,
    period_ns: u64,
    ctx: TaskCtx,
    body: Option<Box<dyn TaskBody>>,
    source: Option<Arc<dyn ActivationSource>>,
    next_n: u64,
    last_start: Option<u64>,
    job: Option<Job>,
    ledger: Ledger,
}

impl Slot {
    fn next_cyclic_release(&self) -> u64 {
        self.next_n * self.period_ns
    }

    fn sporadic_earliest(&self) -> u64 {
        self.last_start.map_or(0, |s| s + self.period_ns)
    }

    /// Creates a job if this task is released at `now`.
    fn try_release(&mut self, now: u64, sink: &TraceSink) {
        if self.job.is_some() {
            return;
        }
        let release = match self.kind {
            TaskKind::Cyclic if self.next_cyclic_release() <= now => self.next_cyclic_release(),
            TaskKind::Sporadic
                if now >= self.sporadic_earliest()
                    && self.source.as_ref().is_some_and(|s| s.pending()) =>
            {
                now
            }
            _ => return,
        };
        let mut body = self.body.take().expect("idle task owns its body");
        let ctx = self.ctx.clone();
        let n = self.next_n;
        let fut: JobFuture = Box::pin(async move {
            body.run(&ctx).await;
            body
        });
        sink.emit(now, &self.name, TraceAction::Release);
        self.job = Some(Job {
            fut,
            n,
            release_ns: release,
            start_ns: None,
            blocked_until: None,
        });
    }

    fn ready(&self, now: u64) -> bool {
        self.job
            .as_ref()
            .is_some_and(|j| j.blocked_until.is_none_or(|t| t <= now))
    }

    /// Earliest future instant at which this task could need the CPU.
    fn next_event(&self, now: u64) -> Option<u64> {
        match &self.job {
            Some(j) => j.blocked_until,
            None => match self.kind {
                TaskKind::Cyclic => Some(self.next_cyclic_release()),
                TaskKind::Sporadic => self
                    .source
                    .as_ref()
                    .filter(|s| s.pending())
                    .map(|_| self.sporadic_earliest().max(now)),
            },
        }
    }
}

pub(crate) fn run(
    clock: &SimClock,
    tasks: Vec<Registered>,
    end_ns: u64,
    sink: &TraceSink,
) -> Result<Vec<Ledger>, ExecError> {
    let mut slots: Vec<Slot> = tasks
        .into_iter()
        .map(|t| Slot {
            name: t.spec.name.clone(),
            priority: t.spec.priority,
            kind: t.spec.kind,
            period_ns: t.spec.period_or_miat_ms * NS_PER_MS,
            ledger: Ledger::new(&t.spec),
            ctx: TaskCtx::new(t.spec, clock.clone(), CtxMode::Deterministic),
            body: Some(t.body),
            source: t.source,
            next_n: 0,
            last_start: None,
            job: None,
        })
        .collect();
    let mut cx = Context::from_waker(Waker::noop());

    loop {
        let now = clock.now_ns();
        // dispatch everything runnable at this instant, highest first
        loop {
            for s in slots.iter_mut() {
                s.try_release(now, sink);
            }
            let Some(i) = (0..slots.len())
                .filter(|&i| slots[i].ready(now))
                .min_by_key(|&i| {
                    let s = &slots[i];
                    (
                        Reverse(s.priority),
                        s.job.as_ref().map(|j| j.release_ns),
                        s.name.as_str(),
                    )
                })
            else {
                break;
            };
            let s = &mut slots[i];
            let job = s.job.as_mut().expect("ready implies a job");
            if job.blocked_until.take().is_some() {
                sink.emit(now, &s.name, TraceAction::Unblock);
            }
            if job.start_ns.is_none() {
                job.start_ns = Some(now);
                s.last_start = Some(now);
                s.ctx.begin(job.n, job.release_ns);
                sink.emit(now, &s.name, TraceAction::Start);
            }
            let polled = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                job.fut.as_mut().poll(&mut cx)
            }));
            let polled = polled.map_err(|_| ExecError::TaskPanicked(s.name.clone()))?;
            assert_eq!(
                locks_held(),
                0,
                "{} suspended while holding a protected object",
                s.name
            );
            match polled {
                Poll::Pending => {
                    let wake = s.ctx.take_wake().unwrap_or_else(|| {
                        panic!("{} awaited something other than a simulated delay", s.name)
                    });
                    job.blocked_until = Some(wake);
                    sink.emit(now, &s.name, TraceAction::Block);
                }
                Poll::Ready(body) => {
                    let job = s.job.take().expect("job present");
                    s.body = Some(body);
                    s.next_n += 1;
                    sink.emit(now, &s.name, TraceAction::End);
                    let start = job.start_ns.expect("started");
                    if !s.ledger.complete(job.n, job.release_ns, start, now) {
                        sink.emit(now, &s.name, TraceAction::Miss);
                    }
                }
            }
        }
        let next = slots.iter().filter_map(|s| s.next_event(now)).min();
        match next {
            Some(t) if t < end_ns => {
                debug_assert!(t > now, "engine made no progress at {now}");
                clock.advance_to(t);
            }
            _ => {
                clock.advance_to(end_ns);
                break;
            }
        }
    }
    Ok(slots.into_iter().map(|s| s.ledger).collect())
}
