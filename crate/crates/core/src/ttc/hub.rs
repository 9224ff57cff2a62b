use std::collections::VecDeque;
use std::io::{self, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex, MutexGuard, PoisonError};
use std::time::Duration;

use serde::Serialize;

use super::frame::{DecodeStats, Frame, FrameDecoder, FrameType};
use super::link::{BandwidthMeter, BandwidthReport, Direction, LinkFsm, LinkState};
use crate::domain::EventKind;
use crate::executor::ActivationSource;
use crate::time::{ns_to_ms_f64, SimClock};

/// Byte pipe to at most one ground station. Every call returns at once.
pub trait Transport: Send {
    /// Adopts a newly arrived connection, replacing any current one.
    fn poll_accept(&mut self) -> bool;
    fn is_open(&self) -> bool;
    /// Appends whatever has arrived.
    fn read_available(&mut self, out: &mut Vec<u8>);
    /// Queues `bytes`; false if there is no connection.
    fn send(&mut self, bytes: &[u8]) -> bool;
    fn close(&mut self);
}

/// Unsent bytes beyond which a stalled connection is dropped.
const MAX_BACKLOG: usize = 4 << 20;

/// The OBSW side of the TCP link: a non-blocking listener whose newest
/// connection wins.
pub struct TcpTransport {
    listener: TcpListener,
    conn: Option<TcpStream>,
    backlog: Vec<u8>,
}

impl TcpTransport {
    pub fn bind(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(Self {
            listener,
            conn: None,
            backlog: Vec::new(),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    fn flush(&mut self) {
        let Some(c) = self.conn.as_mut() else { return };
        while !self.backlog.is_empty() {
            match c.write(&self.backlog) {
                Ok(0) => return self.close(),
                Ok(n) => {
                    self.backlog.drain(..n);
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(_) => return self.close(),
            }
        }
        if self.backlog.len() > MAX_BACKLOG {
            self.close();
        }
    }
}

impl Transport for TcpTransport {
    fn poll_accept(&mut self) -> bool {
        let mut newest = None;
        while let Ok((s, _)) = self.listener.accept() {
            newest = Some(s);
        }
        let Some(s) = newest else { return false };
        if s.set_nonblocking(true).is_err() {
            return false;
        }
        let _ = s.set_nodelay(true);
        self.close();
        self.conn = Some(s);
        true
    }

    fn is_open(&self) -> bool {
        self.conn.is_some()
    }

    fn read_available(&mut self, out: &mut Vec<u8>) {
        let mut buf = [0u8; 4096];
        while let Some(c) = self.conn.as_mut() {
            match c.read(&mut buf) {
                Ok(0) => self.close(),
                Ok(n) => out.extend_from_slice(&buf[..n]),
                Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(_) => self.close(),
            }
        }
    }

    fn send(&mut self, bytes: &[u8]) -> bool {
        if self.conn.is_none() {
            return false;
        }
        self.backlog.extend_from_slice(bytes);
        self.flush();
        self.conn.is_some()
    }

    fn close(&mut self) {
        if let Some(c) = self.conn.take() {
            let _ = c.shutdown(std::net::Shutdown::Both);
        }
        self.backlog.clear();
    }
}

#[derive(Debug, Default)]
struct Pipe {
    connect_requested: bool,
    open: bool,
    /// Ground to onboard.
    up: Vec<u8>,
    down: Vec<u8>,
}

/// In-memory link for deterministic runs. The two halves come from
/// [`virtual_link`].
pub struct VirtualTransport(Arc<Mutex<Pipe>>);

/// Ground end of a [`virtual_link`].
#[derive(Clone)]
pub struct VirtualGsEnd(Arc<Mutex<Pipe>>);

pub fn virtual_link() -> (VirtualTransport, VirtualGsEnd) {
    let p = Arc::new(Mutex::new(Pipe::default()));
    (VirtualTransport(p.clone()), VirtualGsEnd(p))
}

fn lock(p: &Mutex<Pipe>) -> MutexGuard<'_, Pipe> {
    p.lock().unwrap_or_else(PoisonError::into_inner)
}

impl Transport for VirtualTransport {
    fn poll_accept(&mut self) -> bool {
        let mut p = lock(&self.0);
        if !p.connect_requested {
            return false;
        }
        p.connect_requested = false;
        p.open = true;
        p.down.clear();
        true
    }

    fn is_open(&self) -> bool {
        lock(&self.0).open
    }

    fn read_available(&mut self, out: &mut Vec<u8>) {
        let mut p = lock(&self.0);
        if p.open {
            out.append(&mut p.up);
        }
    }

    fn send(&mut self, bytes: &[u8]) -> bool {
        let mut p = lock(&self.0);
        if p.open {
            p.down.extend_from_slice(bytes);
        }
        p.open
    }

    fn close(&mut self) {
        let mut p = lock(&self.0);
        p.open = false;
        p.up.clear();
        p.down.clear();
    }
}

impl VirtualGsEnd {
    /// Requests a connection; the onboard side adopts it on its next service.
    pub fn connect(&self) {
        let mut p = lock(&self.0);
        p.connect_requested = true;
        p.up.clear();
    }

    pub fn disconnect(&self) {
        let mut p = lock(&self.0);
        p.connect_requested = false;
        p.open = false;
        p.up.clear();
        p.down.clear();
    }

    pub fn is_open(&self) -> bool {
        lock(&self.0).open
    }

    pub fn is_pending(&self) -> bool {
        lock(&self.0).connect_requested
    }

    pub fn send(&self, bytes: &[u8]) -> bool {
        let mut p = lock(&self.0);
        if p.open {
            p.up.extend_from_slice(bytes);
        }
        p.open
    }

    pub fn recv(&self) -> Vec<u8> {
        std::mem::take(&mut lock(&self.0).down)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LinkStatus {
    pub state: LinkState,
    pub reconnects: u32,
    pub sessions: u64,
    pub heartbeats_rx: u64,
    pub frames_tx: u64,
    pub decoder: DecodeStats,
    pub downlink_kbps: f64,
    pub uplink_kbps: f64,
}

struct HubInner {
    transport: Box<dyn Transport>,
    fsm: LinkFsm,
    decoder: FrameDecoder,
    inbox: VecDeque<(u64, Frame)>,
    events: VecDeque<EventKind>,
    meter: BandwidthMeter,
    next_seq: u32,
    session: u64,
    heartbeats_rx: u64,
    frames_tx: u64,
    rx: Vec<u8>,
}

impl HubInner {
    fn pump_rx(&mut self, now_ms: u64) {
        self.rx.clear();
        self.transport.read_available(&mut self.rx);
        if self.rx.is_empty() {
            return;
        }
        self.fsm.on_rx(now_ms);
        self.meter.record(Direction::Up, now_ms, self.rx.len());
        self.decoder.push(&self.rx);
        while let Some(f) = self.decoder.next_frame() {
            match f.ftype {
                FrameType::Heartbeat => self.heartbeats_rx += 1,
                _ => self.inbox.push_back((self.session, f)),
            }
        }
    }
}

/// Onboard end of the ground link, shared by the TM Sender and the TC
/// Receiver. It is also the TC Receiver's activation source.
pub struct LinkHub {
    inner: Mutex<HubInner>,
    clock: SimClock,
}

impl LinkHub {
    pub fn new(transport: Box<dyn Transport>, clock: SimClock, timeout_ms: u64) -> Self {
        Self {
            inner: Mutex::new(HubInner {
                transport,
                fsm: LinkFsm::new(timeout_ms),
                decoder: FrameDecoder::default(),
                inbox: VecDeque::new(),
                events: VecDeque::new(),
                meter: BandwidthMeter::default(),
                next_seq: 0,
                session: 0,
                heartbeats_rx: 0,
                frames_tx: 0,
                rx: Vec::new(),
            }),
            clock,
        }
    }

    fn lock(&self) -> MutexGuard<'_, HubInner> {
        self.inner.lock().unwrap_or_else(PoisonError::into_inner)
    }

    /// Accepts, drains input and advances the link state machine. A link
    /// that times out is closed so the ground station reconnects.
    pub fn service(&self) {
        let now = self.clock.now_ms();
        let mut g = self.lock();
        if g.transport.poll_accept() {
            g.session += 1;
            g.decoder.reset();
            if let Some(e) = g.fsm.on_accept(now) {
                g.events.push_back(e);
            }
        }
        g.pump_rx(now);
        let open = g.transport.is_open();
        if let Some(e) = g.fsm.tick(now, open) {
            g.transport.close();
            g.events.push_back(e);
        }
    }

    /// Link events not yet delivered, oldest first.
    pub fn take_events(&self) -> Vec<EventKind> {
        self.lock().events.drain(..).collect()
    }

    /// Puts back an event that could not be delivered.
    pub fn return_event(&self, e: EventKind) {
        self.lock().events.push_front(e);
    }

    /// Received frames other than heartbeats, tagged with their session.
    pub fn take_inbox(&self) -> Vec<(u64, Frame)> {
        self.lock().inbox.drain(..).collect()
    }

    pub fn is_connected(&self) -> bool {
        let g = self.lock();
        g.fsm.state() == LinkState::Connected && g.transport.is_open()
    }

    pub fn state(&self) -> LinkState {
        self.lock().fsm.state()
    }

    /// Frames and sends one message; false if nothing went out.
    pub fn send(&self, ftype: FrameType, payload: Vec<u8>) -> bool {
        let now = self.clock.now_ms();
        let mut g = self.lock();
        if g.fsm.state() != LinkState::Connected || !g.transport.is_open() {
            return false;
        }
        let frame = Frame::new(ftype, g.next_seq, now, payload);
        let Ok(bytes) = frame.encode() else {
            return false;
        };
        if !g.transport.send(&bytes) {
            return false;
        }
        g.next_seq = g.next_seq.wrapping_add(1);
        g.frames_tx += 1;
        g.meter.record(Direction::Down, now, bytes.len());
        true
    }

    pub fn send_json<T: Serialize>(&self, ftype: FrameType, body: &T) -> bool {
        match serde_json::to_vec(body) {
            Ok(p) => self.send(ftype, p),
            Err(_) => false,
        }
    }

    pub fn status(&self) -> LinkStatus {
        let now = self.clock.now_ms();
        let mut g = self.lock();
        let (down, up) = (
            g.meter.kbps(Direction::Down, now),
            g.meter.kbps(Direction::Up, now),
        );
        LinkStatus {
            state: g.fsm.state(),
            reconnects: g.fsm.reconnects(),
            sessions: g.session,
            heartbeats_rx: g.heartbeats_rx,
            frames_tx: g.frames_tx,
            decoder: g.decoder.stats,
            downlink_kbps: down,
            uplink_kbps: up,
        }
    }

    pub fn bandwidth(&self) -> BandwidthReport {
        let elapsed = ns_to_ms_f64(self.clock.now_ns()) / 1000.0;
        self.lock().meter.report(elapsed)
    }

    pub fn close(&self) {
        self.lock().transport.close();
    }
}

impl ActivationSource for LinkHub {
    fn pending(&self) -> bool {
        let now = self.clock.now_ms();
        let mut g = self.lock();
        g.pump_rx(now);
        !g.inbox.is_empty()
    }

    fn wait(&self, timeout: Duration) -> bool {
        std::thread::sleep(timeout.min(Duration::from_millis(2)));
        self.pending()
    }
}
