//! Simulated mission time.
//!
//! Every component reads time from a [`SimClock`]. A virtual clock only moves
//! when the deterministic engine (or a test) advances it; a scaled clock maps
//! host monotonic time onto simulated time with a compression factor.

use std::future::Future;
use std::pin::Pin;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

pub const NS_PER_MS: u64 = 1_000_000;
pub const NS_PER_S: u64 = 1_000_000_000;

pub fn ms_to_ns(ms: u64) -> u64 {
    ms * NS_PER_MS
}

pub fn ns_to_ms_f64(ns: u64) -> f64 {
    ns as f64 / NS_PER_MS as f64
}

pub fn secs_to_ns(s: f64) -> u64 {
    (s * NS_PER_S as f64).round().max(0.0) as u64
}

enum ClockInner {
    Virtual(AtomicU64),
    Scaled {
        origin: OnceLock<Instant>,
        scale: f64,
    },
}

/// Monotonic simulated clock with nanosecond resolution.
#[derive(Clone)]
pub struct SimClock {
    inner: Arc<ClockInner>,
}

impl std::fmt::Debug for SimClock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimClock")
            .field("virtual", &self.is_virtual())
            .field("now_ns", &self.now_ns())
            .finish()
    }
}

impl SimClock {
    /// A clock that starts at zero and only moves when advanced explicitly.
    pub fn new_virtual() -> Self {
        Self {
            inner: Arc::new(ClockInner::Virtual(AtomicU64::new(0))),
        }
    }

    /// A clock following host monotonic time, `scale` simulated seconds per
    /// wall second. Reads zero until [`SimClock::start`] is called.
    pub fn new_scaled(scale: f64) -> Self {
        assert!(
            scale > 0.0 && scale.is_finite(),
            "time scale must be positive"
        );
        Self {
            inner: Arc::new(ClockInner::Scaled {
                origin: OnceLock::new(),
                scale,
            }),
        }
    }

    pub fn is_virtual(&self) -> bool {
        matches!(*self.inner, ClockInner::Virtual(_))
    }

    pub fn time_scale(&self) -> f64 {
        match &*self.inner {
            ClockInner::Virtual(_) => 1.0,
            ClockInner::Scaled { scale, .. } => *scale,
        }
    }

    /// Pins the wall-clock origin of a scaled clock. No-op for virtual clocks
    /// and on repeated calls.
    pub fn start(&self) {
        if let ClockInner::Scaled { origin, .. } = &*self.inner {
            origin.get_or_init(Instant::now);
        }
    }

    pub fn now_ns(&self) -> u64 {
        match &*self.inner {
            ClockInner::Virtual(t) => t.load(Ordering::Acquire),
            ClockInner::Scaled { origin, scale } => match origin.get() {
                Some(o) => (o.elapsed().as_nanos() as f64 * scale) as u64,
                None => 0,
            },
        }
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ns() / NS_PER_MS
    }

    /// Moves a virtual clock forward to `t_ns`. Never moves it backwards.
    pub fn advance_to(&self, t_ns: u64) {
        if let ClockInner::Virtual(t) = &*self.inner {
            t.fetch_max(t_ns, Ordering::AcqRel);
        }
    }

    pub fn advance_by(&self, d_ns: u64) {
        if let ClockInner::Virtual(t) = &*self.inner {
            t.fetch_add(d_ns, Ordering::AcqRel);
        }
    }

    /// The host instant at which a scaled clock reaches `sim_ns`.
    pub fn wall_instant(&self, sim_ns: u64) -> Option<Instant> {
        match &*self.inner {
            ClockInner::Virtual(_) => None,
            ClockInner::Scaled { origin, scale } => {
                let o = *origin.get_or_init(Instant::now);
                Some(o + Duration::from_nanos((sim_ns as f64 / scale) as u64))
            }
        }
    }

    /// Blocks the calling thread until a scaled clock reaches `sim_ns`.
    pub fn sleep_until_blocking(&self, sim_ns: u64) {
        if let Some(deadline) = self.wall_instant(sim_ns) {
            loop {
                let now = Instant::now();
                if now >= deadline {
                    break;
                }
                std::thread::sleep(deadline - now);
            }
        } else {
            self.advance_to(sim_ns);
        }
    }
}

pub type DelayFuture<'a> = Pin<Box<dyn Future<Output = ()> + Send + 'a>>;

/// Something that can tell time and suspend the caller for simulated time.
///
/// Task contexts implement this so drivers can wait out conversion and
/// settling latencies without knowing which execution mode is active.
pub trait Delay: Send + Sync {
    fn now_ns(&self) -> u64;
    fn delay_ns(&self, ns: u64) -> DelayFuture<'_>;

    fn now_ms(&self) -> u64 {
        self.now_ns() / NS_PER_MS
    }
}

/// Outside the executor a clock is its own delay source: a virtual clock
/// jumps forward, a scaled clock sleeps the thread.
impl Delay for SimClock {
    fn now_ns(&self) -> u64 {
        SimClock::now_ns(self)
    }

    fn delay_ns(&self, ns: u64) -> DelayFuture<'_> {
        let target = SimClock::now_ns(self) + ns;
        self.sleep_until_blocking(target);
        Box::pin(std::future::ready(()))
    }
}

/// Polls a future to completion on the current thread.
///
/// Only suitable for futures that never wait on an external waker, which is
/// the case for everything driven by a [`SimClock`] outside the
/// deterministic engine.
pub fn block_on<F: Future>(fut: F) -> F::Output {
    let mut fut = std::pin::pin!(fut);
    let waker = std::task::Waker::noop();
    let mut cx = std::task::Context::from_waker(waker);
    loop {
        if let std::task::Poll::Ready(v) = fut.as_mut().poll(&mut cx) {
            return v;
        }
        std::thread::yield_now();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_is_monotone() {
        let c = SimClock::new_virtual();
        c.advance_to(500);
        c.advance_to(100);
        assert_eq!(c.now_ns(), 500);
        c.advance_by(10);
        assert_eq!(c.now_ns(), 510);
    }

    #[test]
    fn scaled_clock_reads_zero_before_start() {
        let c = SimClock::new_scaled(10.0);
        assert_eq!(c.now_ns(), 0);
        c.start();
        std::thread::sleep(Duration::from_millis(20));
        // 20 ms wall at 10x is at least 200 ms simulated
        assert!(c.now_ms() >= 200);
    }

    #[test]
    fn virtual_delay_advances() {
        let c = SimClock::new_virtual();
        block_on(c.delay_ns(ms_to_ns(125)));
        assert_eq!(c.now_ms(), 125);
    }
}
