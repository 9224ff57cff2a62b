//! Scriptable ground station: the virtual one runs as a lowest-priority
//! task in deterministic runs, the TCP one drives a real socket.
//!
//! Script times are mission seconds, read from frame timestamps.

use std::collections::{BTreeMap, VecDeque};
use std::io::{self, ErrorKind, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, PoisonError};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::frame::{Frame, FrameDecoder, FrameType};
use super::hub::VirtualGsEnd;
use super::link::{BandwidthMeter, BandwidthReport, Direction};
use super::JsonlLog;
use crate::domain::{TcId, Telecommand, ValueMap};
use crate::executor::{TaskBody, TaskCtx};
use crate::time::Delay;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "lowercase")]
pub enum GsAction {
    Tc {
        id: TcId,
        #[serde(default)]
        args: ValueMap,
    },
    /// Closes the link and keeps it down until `reconnect`.
    Drop,
    Reconnect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub t_s: f64,
    #[serde(flatten)]
    pub action: GsAction,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GsScript {
    #[serde(default)]
    pub actions: Vec<ScriptStep>,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("script: {0}")]
    Io(#[from] io::Error),
    #[error("script: {0}")]
    Json(#[from] serde_json::Error),
    #[error("script step {0}: t_s must be finite and non-negative")]
    BadTime(usize),
}

impl GsScript {
    pub fn from_json(text: &str) -> Result<Self, ScriptError> {
        let s: GsScript = serde_json::from_str(text)?;
        if let Some(i) = s
            .actions
            .iter()
            .position(|a| !(a.t_s >= 0.0 && a.t_s.is_finite()))
        {
            return Err(ScriptError::BadTime(i));
        }
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn step(mut self, t_s: f64, action: GsAction) -> Self {
        self.actions.push(ScriptStep { t_s, action });
        self
    }

    pub fn tc(self, t_s: f64, id: TcId, args: Value) -> Self {
        let args = match args {
            Value::Object(m) => m.into_iter().collect(),
            _ => ValueMap::new(),
        };
        self.step(t_s, GsAction::Tc { id, args })
    }
}

/// One transcript line. `dir` is `down`, `up` or `local` (a ground-side
/// happening such as a drop).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub t_ms: u64,
    pub dir: String,
    #[serde(rename = "type")]
    pub ftype: String,
    pub seq: u32,
    pub timestamp_ms: u64,
    pub payload: Value,
}

/// Ground-side bookkeeping at the end of a session.
#[derive(Debug, Clone, Serialize)]
pub struct GsSummary {
    pub frames_down: BTreeMap<String, u64>,
    pub tcs_sent: u32,
    pub seq_violations: u64,
    pub bandwidth: BandwidthReport,
}

/// Transport-independent ground protocol: decodes downlink, answers
/// heartbeats, runs the script and records the transcript.
pub struct GsSession {
    steps: VecDeque<ScriptStep>,
    decoder: FrameDecoder,
    up_seq: u32,
    tc_seq: u32,
    last_down_seq: Option<u32>,
    seq_violations: u64,
    meter: BandwidthMeter,
    entries: Vec<TranscriptEntry>,
    sink: Option<JsonlLog>,
    frames_down: BTreeMap<String, u64>,
    /// Latest downlink timestamp.
    pub last_timestamp_ms: Option<u64>,
}

impl GsSession {
    pub fn new(script: GsScript) -> Self {
        let mut steps = script.actions;
        steps.sort_by(|a, b| a.t_s.total_cmp(&b.t_s));
        Self {
            steps: steps.into(),
            decoder: FrameDecoder::default(),
            up_seq: 0,
            tc_seq: 0,
            last_down_seq: None,
            seq_violations: 0,
            meter: BandwidthMeter::default(),
            entries: Vec::new(),
            sink: None,
            frames_down: BTreeMap::new(),
            last_timestamp_ms: None,
        }
    }

    /// Mirrors the transcript to `path`.
    pub fn record_to(mut self, path: impl AsRef<Path>) -> io::Result<Self> {
        self.sink = Some(JsonlLog::create(path)?);
        Ok(self)
    }

    fn push(&mut self, e: TranscriptEntry) {
        if let Some(s) = &mut self.sink {
            s.write(&e);
        }
        self.entries.push(e);
    }

    pub fn note(&mut self, t_ms: u64, what: &str, payload: Value) {
        self.push(TranscriptEntry {
            t_ms,
            dir: "local".into(),
            ftype: what.into(),
            seq: 0,
            timestamp_ms: t_ms,
            payload,
        });
    }

    /// Call on every new connection.
    pub fn new_session(&mut self) {
        self.decoder.reset();
        self.last_down_seq = None;
    }

    fn outgoing(&mut self, t_ms: u64, ftype: FrameType, payload: Vec<u8>) -> Vec<u8> {
        let frame = Frame::new(ftype, self.up_seq, t_ms, payload);
        self.up_seq = self.up_seq.wrapping_add(1);
        let bytes = frame.encode().expect("ground frames are small");
        self.meter.record(Direction::Up, t_ms, bytes.len());
        self.push(TranscriptEntry {
            t_ms,
            dir: "up".into(),
            ftype: ftype.as_str().into(),
            seq: frame.seq,
            timestamp_ms: t_ms,
            payload: frame.payload_json().unwrap_or(Value::Null),
        });
        bytes
    }

    /// Consumes downlink bytes; returns the replies to send.
    pub fn on_receive(&mut self, t_ms: u64, bytes: &[u8]) -> Vec<u8> {
        if bytes.is_empty() {
            return Vec::new();
        }
        self.meter.record(Direction::Down, t_ms, bytes.len());
        let mut out = Vec::new();
        for f in self.decoder.feed(bytes) {
            if self.last_down_seq.is_some_and(|s| f.seq <= s) {
                self.seq_violations += 1;
            }
            self.last_down_seq = Some(f.seq);
            self.last_timestamp_ms = Some(f.timestamp_ms);
            *self.frames_down.entry(f.ftype.as_str().into()).or_default() += 1;
            let payload = f.payload_json().unwrap_or_else(|_| {
                Value::String(String::from_utf8_lossy(&f.payload).into_owned())
            });
            self.push(TranscriptEntry {
                t_ms,
                dir: "down".into(),
                ftype: f.ftype.as_str().into(),
                seq: f.seq,
                timestamp_ms: f.timestamp_ms,
                payload,
            });
            if f.ftype == FrameType::Heartbeat {
                out.extend(self.outgoing(t_ms, FrameType::Heartbeat, Vec::new()));
            }
        }
        out
    }

    /// Script steps due at `t_ms`, in order.
    pub fn due(&mut self, t_ms: u64) -> Vec<ScriptStep> {
        let mut v = Vec::new();
        while self
            .steps
            .front()
            .is_some_and(|s| s.t_s * 1000.0 <= t_ms as f64)
        {
            v.extend(self.steps.pop_front());
        }
        v
    }

    pub fn remaining_steps(&self) -> usize {
        self.steps.len()
    }

    /// Frames the next telecommand.
    pub fn telecommand(&mut self, t_ms: u64, id: TcId, args: &ValueMap) -> Vec<u8> {
        self.tc_seq += 1;
        let tc = Telecommand {
            id,
            seq: self.tc_seq,
            args: args.clone(),
        };
        let payload = serde_json::to_vec(&tc).expect("telecommand serialises");
        self.outgoing(t_ms, FrameType::Tc, payload)
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn summary(&self, elapsed_s: f64) -> GsSummary {
        GsSummary {
            frames_down: self.frames_down.clone(),
            tcs_sent: self.tc_seq,
            seq_violations: self.seq_violations,
            bandwidth: self.meter.report(elapsed_s),
        }
    }

    pub fn flush(&mut self) {
        if let Some(s) = &mut self.sink {
            s.flush();
        }
    }
}

/// Ground station on a [`super::virtual_link`], run as an executor task.
pub struct VirtualGs {
    end: VirtualGsEnd,
    session: Arc<Mutex<GsSession>>,
    held_down: bool,
    was_open: bool,
}

impl VirtualGs {
    /// Requests the first connection immediately so the link is up at t=0.
    pub fn new(end: VirtualGsEnd, session: GsSession) -> Self {
        end.connect();
        Self {
            end,
            session: Arc::new(Mutex::new(session)),
            held_down: false,
            was_open: false,
        }
    }

    /// Handle for reading the transcript after the run.
    pub fn session(&self) -> Arc<Mutex<GsSession>> {
        self.session.clone()
    }

    fn step(&mut self, now: u64) {
        let mut s = self.session.lock().unwrap_or_else(PoisonError::into_inner);
        let open = self.end.is_open();
        if open && !self.was_open {
            s.new_session();
            s.note(now, "connected", Value::Null);
        } else if !open && self.was_open && !self.held_down {
            s.note(now, "disconnected", Value::Null);
        }
        self.was_open = open;
        if open {
            let replies = s.on_receive(now, &self.end.recv());
            if !replies.is_empty() {
                self.end.send(&replies);
            }
        }
        for step in s.due(now) {
            match step.action {
                GsAction::Tc { id, args } => {
                    if self.end.is_open() {
                        let bytes = s.telecommand(now, id, &args);
                        self.end.send(&bytes);
                    } else {
                        s.note(
                            now,
                            "tc_not_sent",
                            json!({ "id": id, "reason": "link down" }),
                        );
                    }
                }
                GsAction::Drop => {
                    self.end.disconnect();
                    self.held_down = true;
                    self.was_open = false;
                    s.note(now, "drop", Value::Null);
                }
                GsAction::Reconnect => {
                    self.held_down = false;
                    s.note(now, "reconnect", Value::Null);
                    self.end.connect();
                }
            }
        }
        if !self.held_down && !self.end.is_open() && !self.end.is_pending() {
            self.end.connect();
        }
    }
}

#[async_trait(?Send)]
impl TaskBody for VirtualGs {
    async fn run(&mut self, ctx: &TaskCtx) {
        self.step(ctx.now_ms());
    }
}

impl Drop for VirtualGs {
    fn drop(&mut self) {
        self.session
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .flush();
    }
}

#[derive(Debug, Clone)]
pub struct TcpGsOptions {
    pub addr: String,
    /// Stop once the mission clock passes this many seconds.
    pub duration_s: f64,
    /// Mission seconds per wall second of the onboard run, used to keep
    /// time while no frames arrive.
    pub time_scale: f64,
    pub max_backoff: Duration,
}

impl TcpGsOptions {
    pub fn new(addr: impl Into<String>, duration_s: f64) -> Self {
        Self {
            addr: addr.into(),
            duration_s,
            time_scale: 1.0,
            max_backoff: Duration::from_secs(2),
        }
    }
}

/// Mission time as seen from the ground: the newest frame timestamp, run
/// forward on the wall clock between frames.
struct MissionClock {
    anchor_ms: f64,
    anchor_at: Instant,
    scale: f64,
}

impl MissionClock {
    fn now_ms(&self) -> u64 {
        (self.anchor_ms + self.anchor_at.elapsed().as_secs_f64() * 1000.0 * self.scale) as u64
    }

    fn sync(&mut self, ts_ms: u64) {
        self.anchor_ms = ts_ms as f64;
        self.anchor_at = Instant::now();
    }
}

/// Runs a ground station over TCP until the mission clock passes
/// `duration_s` or `stop` is raised. Refused connections are retried with
/// exponential backoff.
pub fn run_tcp_gs(
    opts: &TcpGsOptions,
    mut session: GsSession,
    stop: Option<&AtomicBool>,
) -> io::Result<(GsSummary, Vec<TranscriptEntry>)> {
    let addr = opts.addr.to_socket_addrs()?.next().ok_or_else(|| {
        io::Error::new(
            ErrorKind::InvalidInput,
            format!("no address for {}", opts.addr),
        )
    })?;
    let mut clock = MissionClock {
        anchor_ms: 0.0,
        anchor_at: Instant::now(),
        scale: opts.time_scale,
    };
    let end_ms = (opts.duration_s * 1000.0) as u64;
    let mut conn: Option<TcpStream> = None;
    let mut held_down = false;
    let mut backoff = Duration::from_millis(50);
    let mut retry_at = Instant::now();
    let mut buf = [0u8; 8192];
    let first_ms = clock.now_ms();
    while clock.now_ms() < end_ms && !stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
        if conn.is_none() && !held_down && Instant::now() >= retry_at {
            match TcpStream::connect_timeout(&addr, Duration::from_millis(500)) {
                Ok(s) => {
                    s.set_read_timeout(Some(Duration::from_millis(5)))?;
                    let _ = s.set_nodelay(true);
                    session.new_session();
                    session.note(clock.now_ms(), "connected", json!({ "addr": opts.addr }));
                    backoff = Duration::from_millis(50);
                    conn = Some(s);
                }
                Err(e) => {
                    eprintln!(
                        "gs: connect {} failed: {e}; retrying in {} ms",
                        opts.addr,
                        backoff.as_millis()
                    );
                    session.note(
                        clock.now_ms(),
                        "connect_failed",
                        json!({ "error": e.to_string() }),
                    );
                    retry_at = Instant::now() + backoff;
                    backoff = (backoff * 2).min(opts.max_backoff);
                }
            }
        }
        let mut lost = false;
        if let Some(s) = conn.as_mut() {
            match s.read(&mut buf) {
                Ok(0) => lost = true,
                Ok(n) => {
                    let now = clock.now_ms();
                    let replies = session.on_receive(now, &buf[..n]);
                    if let Some(ts) = session.last_timestamp_ms {
                        clock.sync(ts);
                    }
                    if !replies.is_empty() && s.write_all(&replies).is_err() {
                        lost = true;
                    }
                }
                Err(e)
                    if matches!(
                        e.kind(),
                        ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted
                    ) => {}
                Err(_) => lost = true,
            }
        } else {
            std::thread::sleep(Duration::from_millis(5));
        }
        if lost {
            conn = None;
            session.note(clock.now_ms(), "disconnected", Value::Null);
            retry_at = Instant::now() + backoff;
        }
        let now = clock.now_ms();
        for step in session.due(now) {
            match step.action {
                GsAction::Tc { id, args } => match conn.as_mut() {
                    Some(s) => {
                        let bytes = session.telecommand(now, id, &args);
                        if s.write_all(&bytes).is_err() {
                            conn = None;
                        }
                    }
                    None => session.note(
                        now,
                        "tc_not_sent",
                        json!({ "id": id, "reason": "link down" }),
                    ),
                },
                GsAction::Drop => {
                    if let Some(s) = conn.take() {
                        let _ = s.shutdown(std::net::Shutdown::Both);
                    }
                    held_down = true;
                    session.note(now, "drop", Value::Null);
                }
                GsAction::Reconnect => {
                    held_down = false;
                    retry_at = Instant::now();
                    session.note(now, "reconnect", Value::Null);
                }
            }
        }
    }
    session.flush();
    let elapsed_s = clock.now_ms().saturating_sub(first_ms) as f64 / 1000.0;
    Ok((session.summary(elapsed_s), session.entries().to_vec()))
}
