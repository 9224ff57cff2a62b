//! Ground link: frame codec, link supervision, bandwidth metering, the TM
//! Sender and TC Receiver tasks, and a scriptable ground station.
//!
//! Payloads are JSON. TM_SC carries `{cycle, mode, nads, atl, el}` and
//! TM_HK `{cycle, mode, pcu, htl, tm_mode, counters}`, each state as a
//! `{value, timestamp_ms, write_count}` stamp. TC is a telecommand
//! `{id, seq, args}`; TC_ACK an ack record with `stage` `received` (from
//! the TC Receiver) or `executed` (from the TC Handler); EVENT an event
//! record. HEARTBEAT is empty and the ground answers each one in kind.

mod frame;
mod gs;
mod hub;
mod link;
mod tasks;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

pub use frame::{
    decode_frame, DecodeStats, Frame, FrameDecoder, FrameError, FrameType, CRC_LEN, HEADER_LEN,
    MAGIC, MAX_PAYLOAD, VERSION,
};
pub use gs::{
    run_tcp_gs, GsAction, GsScript, GsSession, GsSummary, ScriptError, ScriptStep, TcpGsOptions,
    TranscriptEntry, VirtualGs,
};
pub use hub::{
    virtual_link, LinkHub, LinkStatus, TcpTransport, Transport, VirtualGsEnd, VirtualTransport,
};
pub use link::{
    BandwidthMeter, BandwidthReport, Direction, LinkFsm, LinkState, QUOTA_KBPS, WINDOW_MS,
};
pub use tasks::{TcReceiver, TmSender};

/// JSON-lines writer that ignores write failures after creation.
pub struct JsonlLog {
    w: BufWriter<File>,
    lines: u64,
}

impl JsonlLog {
    pub fn create(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self {
            w: BufWriter::new(File::create(path)?),
            lines: 0,
        })
    }

    pub fn write<T: Serialize>(&mut self, v: &T) {
        if serde_json::to_writer(&mut self.w, v).is_ok() && self.w.write_all(b"\n").is_ok() {
            self.lines += 1;
        }
    }

    pub fn lines(&self) -> u64 {
        self.lines
    }

    pub fn flush(&mut self) {
        let _ = self.w.flush();
    }
}

impl Drop for JsonlLog {
    fn drop(&mut self) {
        self.flush();
    }
}

/// Reads a JSON-lines file into values, skipping blank lines.
pub fn read_jsonl(path: impl AsRef<Path>) -> std::io::Result<Vec<serde_json::Value>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}

#[cfg(test)]
mod tests;
