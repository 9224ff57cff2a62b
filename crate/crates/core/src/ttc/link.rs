use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::domain::EventKind;

pub const QUOTA_KBPS: f64 = 500.0;
pub const WINDOW_MS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkState {
    /// No ground station has connected yet.
    Listening,
    Connected,
    Lost,
}

/// Connection liveness. The first connection is silent; afterwards every
/// Connected/Lost edge yields exactly one event.
#[derive(Debug, Clone)]
pub struct LinkFsm {
    state: LinkState,
    reconnects: u32,
    last_rx_ms: u64,
    timeout_ms: u64,
}

impl LinkFsm {
    pub fn new(timeout_ms: u64) -> Self {
        Self {
            state: LinkState::Listening,
            reconnects: 0,
            last_rx_ms: 0,
            timeout_ms,
        }
    }

    pub fn state(&self) -> LinkState {
        self.state
    }

    pub fn reconnects(&self) -> u32 {
        self.reconnects
    }

    pub fn last_rx_ms(&self) -> u64 {
        self.last_rx_ms
    }

    pub fn on_accept(&mut self, now_ms: u64) -> Option<EventKind> {
        let prev = self.state;
        self.state = LinkState::Connected;
        self.last_rx_ms = now_ms;
        (prev == LinkState::Lost).then(|| {
            self.reconnects += 1;
            EventKind::LinkRestored
        })
    }

    pub fn on_rx(&mut self, now_ms: u64) {
        self.last_rx_ms = self.last_rx_ms.max(now_ms);
    }

    /// Declares the link lost when the socket is gone or silent for the
    /// timeout.
    pub fn tick(&mut self, now_ms: u64, socket_open: bool) -> Option<EventKind> {
        let silent = now_ms.saturating_sub(self.last_rx_ms) >= self.timeout_ms;
        (self.state == LinkState::Connected && (!socket_open || silent)).then(|| {
            self.state = LinkState::Lost;
            EventKind::LinkLost
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Down,
    Up,
}

#[derive(Debug, Clone, Default)]
struct Channel {
    window: VecDeque<(u64, u64)>,
    total_bits: u64,
    peak_kbps: f64,
}

impl Channel {
    fn record(&mut self, now_ms: u64, bits: u64) {
        self.window.push_back((now_ms, bits));
        self.total_bits += bits;
        let k = self.kbps(now_ms);
        self.peak_kbps = self.peak_kbps.max(k);
    }

    fn kbps(&mut self, now_ms: u64) -> f64 {
        while self
            .window
            .front()
            .is_some_and(|(t, _)| t + WINDOW_MS <= now_ms)
        {
            self.window.pop_front();
        }
        let bits: u64 = self.window.iter().map(|(_, b)| b).sum();
        bits as f64 / (WINDOW_MS as f64 / 1000.0) / 1000.0
    }
}

/// Rolling 10 s link throughput against the 500 kbps quota.
#[derive(Debug, Clone, Default)]
pub struct BandwidthMeter {
    down: Channel,
    up: Channel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthReport {
    pub elapsed_s: f64,
    pub quota_kbps: f64,
    /// Whole-run averages.
    pub downlink_kbps: f64,
    pub uplink_kbps: f64,
    /// Largest 10 s window seen.
    pub downlink_peak_kbps: f64,
    pub uplink_peak_kbps: f64,
    pub downlink_bytes: u64,
    pub uplink_bytes: u64,
    pub within_quota: bool,
}

impl BandwidthMeter {
    fn channel(&mut self, dir: Direction) -> &mut Channel {
        match dir {
            Direction::Down => &mut self.down,
            Direction::Up => &mut self.up,
        }
    }

    pub fn record(&mut self, dir: Direction, now_ms: u64, bytes: usize) {
        self.channel(dir).record(now_ms, bytes as u64 * 8);
    }

    /// Bits in the window ending at `now_ms` over the window length.
    pub fn kbps(&mut self, dir: Direction, now_ms: u64) -> f64 {
        self.channel(dir).kbps(now_ms)
    }

    pub fn report(&self, elapsed_s: f64) -> BandwidthReport {
        let avg = |c: &Channel| {
            if elapsed_s > 0.0 {
                c.total_bits as f64 / elapsed_s / 1000.0
            } else {
                0.0
            }
        };
        let (d, u) = (avg(&self.down), avg(&self.up));
        BandwidthReport {
            elapsed_s,
            quota_kbps: QUOTA_KBPS,
            downlink_kbps: d,
            uplink_kbps: u,
            downlink_peak_kbps: self.down.peak_kbps,
            uplink_peak_kbps: self.up.peak_kbps,
            downlink_bytes: self.down.total_bits / 8,
            uplink_bytes: self.up.total_bits / 8,
            within_quota: self.down.peak_kbps < QUOTA_KBPS && self.up.peak_kbps < QUOTA_KBPS,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_connect_is_silent_then_one_event_per_edge() {
        let mut fsm = LinkFsm::new(3000);
        assert_eq!(fsm.state(), LinkState::Listening);
        assert_eq!(fsm.on_accept(0), None);
        for t in (0..60_000).step_by(1000) {
            fsm.on_rx(t);
            assert_eq!(fsm.tick(t, true), None);
        }
        assert_eq!(fsm.tick(61_000, false), Some(EventKind::LinkLost));
        assert_eq!(fsm.tick(62_000, false), None);
        assert_eq!(fsm.on_accept(70_000), Some(EventKind::LinkRestored));
        assert_eq!(fsm.on_accept(70_500), None, "newest connection replaces");
        assert_eq!(fsm.reconnects(), 1);
    }

    #[test]
    fn silence_times_out_at_three_seconds() {
        let mut fsm = LinkFsm::new(3000);
        fsm.on_accept(0);
        fsm.on_rx(1000);
        assert_eq!(fsm.tick(3999, true), None);
        assert_eq!(fsm.tick(4000, true), Some(EventKind::LinkLost));
    }

    #[test]
    fn listening_never_times_out() {
        let mut fsm = LinkFsm::new(3000);
        assert_eq!(fsm.tick(100_000, false), None);
        assert_eq!(fsm.state(), LinkState::Listening);
    }

    #[test]
    fn window_rate_is_bits_over_ten_seconds() {
        let mut m = BandwidthMeter::default();
        for t in 0..10u64 {
            m.record(Direction::Down, t * 1000, 250);
        }
        // 10 * 250 B * 8 / 10 s = 2000 bit/s
        assert!((m.kbps(Direction::Down, 9_000) - 2.0).abs() < 1e-12);
        // the t=0 record leaves the window at t=10 s
        assert!((m.kbps(Direction::Down, 10_000) - 1.8).abs() < 1e-12);
        assert_eq!(m.kbps(Direction::Up, 10_000), 0.0);
        let r = m.report(10.0);
        assert!((r.downlink_kbps - 2.0).abs() < 1e-12);
        assert!((r.downlink_peak_kbps - 2.0).abs() < 1e-12);
        assert!(r.within_quota);
    }

    proptest! {
        #[test]
        fn events_alternate(steps in prop::collection::vec((0u8..3, 0u64..5000), 1..200)) {
            let mut fsm = LinkFsm::new(3000);
            let mut now = 0;
            let mut events = Vec::new();
            for (op, dt) in steps {
                now += dt;
                let e = match op {
                    0 => fsm.on_accept(now),
                    1 => { fsm.on_rx(now); None }
                    _ => fsm.tick(now, dt % 2 == 0),
                };
                events.extend(e);
            }
            // LinkLost first, then strictly alternating
            for (i, e) in events.iter().enumerate() {
                let want = if i % 2 == 0 { EventKind::LinkLost } else { EventKind::LinkRestored };
                prop_assert_eq!(*e, want);
            }
        }

        #[test]
        fn window_rate_matches_brute_force(recs in prop::collection::vec((0u64..2000, 0usize..5000), 1..100), probe in 0u64..2000) {
            let mut m = BandwidthMeter::default();
            let mut t = 0;
            let mut all = Vec::new();
            for (dt, b) in recs {
                t += dt;
                m.record(Direction::Up, t, b);
                all.push((t, b));
            }
            let now = t + probe;
            let bits: usize = all.iter().filter(|(ts, _)| ts + WINDOW_MS > now).map(|(_, b)| b * 8).sum();
            prop_assert!((m.kbps(Direction::Up, now) - bits as f64 / 10_000.0).abs() < 1e-9);
        }
    }
}
