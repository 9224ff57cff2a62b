use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::ctx::{ActivationSource, CtxMode, TaskBody, TaskCtx};
use super::rt;
use super::trace::{TraceAction, TraceSink};
use super::{ExecConfig, ExecError, Ledger, Registered};
use crate::datapool::{clear_ceiling_hook, install_ceiling_hook};
use crate::domain::TaskKind;
use crate::time::{block_on, SimClock, NS_PER_MS};

const POLL_WALL: Duration = Duration::from_millis(20);

fn activate(
    body: &mut Box<dyn TaskBody>,
    ctx: &TaskCtx,
    ledger: &mut Ledger,
    sink: &TraceSink,
    n: u64,
    release: u64,
) {
    let clock = ctx.clock();
    let start = clock.now_ns();
    ctx.begin(n, release);
    sink.emit(start, ctx.name(), TraceAction::Start);
    block_on(body.run(ctx));
    let end = clock.now_ns();
    sink.emit(end, ctx.name(), TraceAction::End);
    if !ledger.complete(n, release, start, end) {
        sink.emit(end, ctx.name(), TraceAction::Miss);
    }
}

fn cyclic_loop(
    mut body: Box<dyn TaskBody>,
    ctx: TaskCtx,
    ledger: &mut Ledger,
    sink: &TraceSink,
    end_ns: u64,
) {
    let period = ctx.spec().period_or_miat_ms * NS_PER_MS;
    let clock = ctx.clock().clone();
    for n in 0.. {
        let release = n * period;
        if release >= end_ns {
            break;
        }
        clock.sleep_until_blocking(release);
        sink.emit(release, ctx.name(), TraceAction::Release);
        activate(&mut body, &ctx, ledger, sink, n, release);
    }
}

fn sporadic_loop(
    mut body: Box<dyn TaskBody>,
    ctx: TaskCtx,
    source: Arc<dyn ActivationSource>,
    ledger: &mut Ledger,
    sink: &TraceSink,
    end_ns: u64,
    stop: &AtomicBool,
) {
    let miat = ctx.spec().period_or_miat_ms * NS_PER_MS;
    let clock = ctx.clock().clone();
    let mut last_start: Option<u64> = None;
    let mut n = 0;
    while !stop.load(Ordering::Acquire) && clock.now_ns() < end_ns {
        if !source.pending() {
            source.wait(POLL_WALL);
            continue;
        }
        let earliest = last_start.map_or(0, |s| s + miat);
        if earliest >= end_ns {
            break;
        }
        clock.sleep_until_blocking(earliest);
        let release = clock.now_ns();
        if release >= end_ns {
            break;
        }
        sink.emit(release, ctx.name(), TraceAction::Release);
        last_start = Some(release);
        activate(&mut body, &ctx, ledger, sink, n, release);
        n += 1;
    }
}

pub(crate) fn run(
    clock: &SimClock,
    tasks: Vec<Registered>,
    end_ns: u64,
    sink: &TraceSink,
    cfg: &ExecConfig,
) -> Result<(Vec<Ledger>, Vec<String>), ExecError> {
    let notes = Mutex::new(Vec::<String>::new());
    let stop = AtomicBool::new(false);
    clock.start();
    let results: Vec<Result<Ledger, ExecError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = tasks
            .into_iter()
            .map(|t| {
                let (notes, stop) = (&notes, &stop);
                let name = t.spec.name.clone();
                let h = std::thread::Builder::new()
                    .name(name.clone())
                    .spawn_scoped(scope, move || {
                        let prio = rt::os_priority(t.spec.priority);
                        if let Some(cpu) = cfg.pin_cpu {
                            if let Err(e) = rt::pin_to_cpu(cpu) {
                                notes.lock().unwrap().push(format!(
                                    "{}: affinity to CPU {cpu} refused: {e}",
                                    t.spec.name
                                ));
                            }
                        }
                        let mut boosted = false;
                        if cfg.realtime {
                            match rt::set_fifo(prio) {
                                Ok(()) => {
                                    install_ceiling_hook(Box::new(rt::FifoCeiling::new(prio)));
                                    boosted = true;
                                }
                                Err(e) => notes
                                    .lock()
                                    .unwrap()
                                    .push(format!("{}: SCHED_FIFO refused: {e}", t.spec.name)),
                            }
                        }
                        let mut ledger = Ledger::new(&t.spec);
                        let ctx = TaskCtx::new(t.spec.clone(), clock.clone(), CtxMode::Threaded);
                        match (t.spec.kind, t.source) {
                            (TaskKind::Sporadic, Some(src)) => {
                                sporadic_loop(t.body, ctx, src, &mut ledger, sink, end_ns, stop)
                            }
                            _ => cyclic_loop(t.body, ctx, &mut ledger, sink, end_ns),
                        }
                        if boosted {
                            clear_ceiling_hook();
                        }
                        ledger
                    })
                    .expect("spawn task thread");
                (name, h)
            })
            .collect();
        clock.sleep_until_blocking(end_ns);
        stop.store(true, Ordering::Release);
        handles
            .into_iter()
            .map(|(name, h)| h.join().map_err(|_| ExecError::TaskPanicked(name)))
            .collect()
    });
    let ledgers = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut notes = notes.into_inner().unwrap();
    notes.sort();
    notes.dedup();
    Ok((ledgers, notes))
}
