use std::path::Path;
use std::sync::Arc;

use async_trait::async_trait;
use serde::Serialize;
use serde_json::{json, Value};

use super::frame::{Frame, FrameType};
use super::hub::LinkHub;
use super::JsonlLog;
use crate::datapool::{AckRecord, AckStage, AckStatus, Caller, DataPool, PutResult};
use crate::domain::{Event, Telecommand};
use crate::executor::{TaskBody, TaskCtx};
use crate::time::Delay;

/// Most journal records forwarded per cycle, so a reconnect after a long
/// outage does not burst.
const FORWARD_BATCH: usize = 50;

/// One onboard TM log line.
#[derive(Debug, Serialize)]
struct TmLogLine<'a> {
    t_ms: u64,
    n: u64,
    sent: bool,
    payload: &'a Value,
}

/// Delivers link events queued by the hub; stops at the first refusal,
/// which is retried next cycle.
fn deliver_link_events(hub: &LinkHub, pool: &DataPool, caller: &Caller<'_>, now_ms: u64) {
    for kind in hub.take_events() {
        if pool.event_queue.put(caller, Event::new(kind, now_ms)) == PutResult::Rejected {
            hub.return_event(kind);
            break;
        }
    }
}

/// Builds and sends SC/HK telemetry once per second, heartbeats the link
/// and forwards journalled events and executed acks.
pub struct TmSender {
    hub: Arc<LinkHub>,
    pool: Arc<DataPool>,
    sc_log: Option<JsonlLog>,
    hk_log: Option<JsonlLog>,
    cycle: u64,
    sc_count: u64,
    hk_count: u64,
    event_cursor: usize,
    ack_cursor: usize,
}

impl TmSender {
    pub fn new(hub: Arc<LinkHub>, pool: Arc<DataPool>) -> Self {
        Self {
            hub,
            pool,
            sc_log: None,
            hk_log: None,
            cycle: 0,
            sc_count: 0,
            hk_count: 0,
            event_cursor: 0,
            ack_cursor: 0,
        }
    }

    /// Opens `tm_sc.jsonl` and `tm_hk.jsonl` in `dir`.
    pub fn with_logs(mut self, dir: &Path) -> std::io::Result<Self> {
        self.sc_log = Some(JsonlLog::create(dir.join("tm_sc.jsonl"))?);
        self.hk_log = Some(JsonlLog::create(dir.join("tm_hk.jsonl"))?);
        Ok(self)
    }

    pub fn sc_count(&self) -> u64 {
        self.sc_count
    }

    pub fn hk_count(&self) -> u64 {
        self.hk_count
    }

    fn forward(&mut self) {
        let events = self.pool.events.since(self.event_cursor);
        for ev in events.iter().take(FORWARD_BATCH) {
            if !self.hub.send_json(FrameType::Event, ev) {
                return;
            }
            self.event_cursor += 1;
        }
        let acks = self.pool.acks.since(self.ack_cursor);
        for ack in acks.iter().take(FORWARD_BATCH) {
            if ack.stage == AckStage::Executed && !self.hub.send_json(FrameType::TcAck, ack) {
                return;
            }
            self.ack_cursor += 1;
        }
    }
}

fn log_line(log: &mut Option<JsonlLog>, t_ms: u64, n: u64, sent: bool, payload: &Value) {
    if let Some(l) = log {
        l.write(&TmLogLine {
            t_ms,
            n,
            sent,
            payload,
        });
    }
}

#[async_trait(?Send)]
impl TaskBody for TmSender {
    async fn run(&mut self, ctx: &TaskCtx) {
        let caller = ctx.caller();
        let now = ctx.now_ms();
        let pool = self.pool.clone();
        self.hub.service();
        deliver_link_events(&self.hub, &pool, &caller, now);

        let tm = pool.ttc_tm_mode.get(&caller);
        let mode = pool.ttc_mode.get(&caller);
        let connected = self.hub.is_connected();
        if connected {
            self.hub.send(FrameType::Heartbeat, Vec::new());
        }
        if self.cycle.is_multiple_of(tm.sc_divider.max(1) as u64) {
            let payload = json!({
                "cycle": self.cycle,
                "mode": mode,
                "nads": pool.nads.read(&caller),
                "atl": pool.atl.read(&caller),
                "el": pool.el.read(&caller),
            });
            let sent = self.hub.send_json(FrameType::TmSc, &payload);
            log_line(&mut self.sc_log, now, self.sc_count, sent, &payload);
            self.sc_count += 1;
        }
        if self.cycle.is_multiple_of(tm.hk_divider.max(1) as u64) {
            let payload = json!({
                "cycle": self.cycle,
                "mode": mode,
                "pcu": pool.pcu.read(&caller),
                "htl": pool.htl.read(&caller),
                "tm_mode": tm,
                "counters": {
                    "tc_queue": pool.tc_queue.stats(),
                    "event_queue": pool.event_queue.stats(),
                    "events": pool.events.len(),
                    "acks": pool.acks.len(),
                    "mode_changes": pool.modes.len(),
                    "link": self.hub.status(),
                },
            });
            let sent = self.hub.send_json(FrameType::TmHk, &payload);
            log_line(&mut self.hk_log, now, self.hk_count, sent, &payload);
            self.hk_count += 1;
        }
        if connected {
            self.forward();
        }
        self.cycle += 1;
    }
}

/// Moves uplinked telecommands into the TC-Queue, acknowledging each one
/// as received or rejected.
pub struct TcReceiver {
    hub: Arc<LinkHub>,
    pool: Arc<DataPool>,
    /// Session and seq of the last TC taken.
    last: Option<(u64, u32)>,
    ignored_frames: u64,
}

impl TcReceiver {
    pub fn new(hub: Arc<LinkHub>, pool: Arc<DataPool>) -> Self {
        Self {
            hub,
            pool,
            last: None,
            ignored_frames: 0,
        }
    }

    pub fn ignored_frames(&self) -> u64 {
        self.ignored_frames
    }

    fn receive(&mut self, caller: &Caller<'_>, session: u64, f: &Frame) -> AckRecord {
        let now = self.pool.clock().now_ms();
        let mut ack = AckRecord {
            t_ms: now,
            seq: f.seq,
            id: None,
            stage: AckStage::Received,
            status: AckStatus::Rejected,
            reason: None,
            result: None,
        };
        let value = f.payload_json().unwrap_or(Value::Null);
        if let Some(seq) = value.get("seq").and_then(Value::as_u64) {
            ack.seq = seq as u32;
        }
        let tc: Telecommand = match serde_json::from_value(value) {
            Ok(tc) => tc,
            Err(e) => {
                ack.reason = Some(format!("malformed telecommand: {e}"));
                return ack;
            }
        };
        ack.id = Some(tc.id);
        if let Some((s, last)) = self.last {
            if s == session && tc.seq <= last {
                ack.reason = Some(format!("seq {} not after {last}", tc.seq));
                return ack;
            }
        }
        self.last = Some((session, tc.seq));
        match self.pool.tc_queue.put(caller, tc) {
            PutResult::Accepted => ack.status = AckStatus::Accepted,
            PutResult::Rejected => ack.reason = Some("TC queue full".into()),
        }
        ack
    }
}

#[async_trait(?Send)]
impl TaskBody for TcReceiver {
    async fn run(&mut self, ctx: &TaskCtx) {
        let caller = ctx.caller();
        use crate::executor::ActivationSource;
        self.hub.pending();
        for (session, f) in self.hub.take_inbox() {
            if f.ftype != FrameType::Tc {
                self.ignored_frames += 1;
                continue;
            }
            let ack = self.receive(&caller, session, &f);
            self.pool.acks.append(ack.clone());
            self.hub.send_json(FrameType::TcAck, &ack);
        }
    }
}
