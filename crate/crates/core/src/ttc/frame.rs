//! Binary framing of the ground link.
//!
//! ```text
//! 5C A7 | ver | type | seq u32 | timestamp_ms u64 | len u16 | payload | crc32
//! ```
//! Multi-byte fields are big-endian; the CRC (IEEE) covers `ver..payload`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: [u8; 2] = [0x5C, 0xA7];
pub const VERSION: u8 = 0x01;
/// Magic through payload length.
pub const HEADER_LEN: usize = 18;
pub const CRC_LEN: usize = 4;
pub const MAX_PAYLOAD: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum FrameType {
    TmSc = 0x01,
    TmHk = 0x02,
    Tc = 0x03,
    TcAck = 0x04,
    Event = 0x05,
    Heartbeat = 0x06,
}

impl FrameType {
    pub const ALL: [FrameType; 6] = [
        FrameType::TmSc,
        FrameType::TmHk,
        FrameType::Tc,
        FrameType::TcAck,
        FrameType::Event,
        FrameType::Heartbeat,
    ];

    pub fn from_u8(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == b)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FrameType::TmSc => "TM_SC",
            FrameType::TmHk => "TM_HK",
            FrameType::Tc => "TC",
            FrameType::TcAck => "TC_ACK",
            FrameType::Event => "EVENT",
            FrameType::Heartbeat => "HEARTBEAT",
        }
    }
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub ftype: FrameType,
    pub seq: u32,
    pub timestamp_ms: u64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("payload of {0} bytes exceeds {MAX_PAYLOAD}")]
    PayloadTooLong(usize),
    #[error("payload is not JSON: {0}")]
    Json(String),
}

impl Frame {
    pub fn new(ftype: FrameType, seq: u32, timestamp_ms: u64, payload: Vec<u8>) -> Self {
        Self {
            ftype,
            seq,
            timestamp_ms,
            payload,
        }
    }

    pub fn json<T: Serialize>(
        ftype: FrameType,
        seq: u32,
        timestamp_ms: u64,
        body: &T,
    ) -> Result<Self, FrameError> {
        let payload = serde_json::to_vec(body).map_err(|e| FrameError::Json(e.to_string()))?;
        Ok(Self::new(ftype, seq, timestamp_ms, payload))
    }

    /// The payload as JSON; an empty payload reads as `null`.
    pub fn payload_json(&self) -> Result<serde_json::Value, FrameError> {
        if self.payload.is_empty() {
            return Ok(serde_json::Value::Null);
        }
        serde_json::from_slice(&self.payload).map_err(|e| FrameError::Json(e.to_string()))
    }

    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.payload.len() + CRC_LEN
    }

    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        let len = self.payload.len();
        if len > MAX_PAYLOAD {
            return Err(FrameError::PayloadTooLong(len));
        }
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.ftype as u8);
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&self.timestamp_ms.to_be_bytes());
        out.extend_from_slice(&(len as u16).to_be_bytes());
        out.extend_from_slice(&self.payload);
        let crc = crc32fast::hash(&out[2..]);
        out.extend_from_slice(&crc.to_be_bytes());
        Ok(out)
    }
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Option<Frame> {
    let mut d = FrameDecoder::default();
    d.push(bytes);
    let f = d.next_frame()?;
    (d.buffered() == 0
        && d.stats
            == DecodeStats {
                frames: 1,
                ..DecodeStats::default()
            })
    .then_some(f)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DecodeStats {
    pub frames: u64,
    /// Bytes discarded while hunting for the magic.
    pub skipped_bytes: u64,
    pub bad_crc: u64,
    pub bad_version: u64,
    pub bad_type: u64,
    pub oversize: u64,
}

/// Incremental decoder: accepts arbitrary chunks and resynchronises on the
/// magic after garbage or a rejected frame.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    pub stats: DecodeStats,
}

impl FrameDecoder {
    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    pub fn reset(&mut self) {
        self.buf.clear();
    }

    /// Drops `n` leading bytes.
    fn discard(&mut self, n: usize) {
        self.buf.drain(..n.min(self.buf.len()));
    }

    /// Skips to the next candidate magic. A lone trailing 0x5C is kept as
    /// it may start a magic split across reads.
    fn hunt(&mut self) {
        let at = self.buf.windows(2).position(|w| w == MAGIC);
        let skip = match at {
            Some(i) => i,
            None if self.buf.last() == Some(&MAGIC[0]) => self.buf.len() - 1,
            None => self.buf.len(),
        };
        self.stats.skipped_bytes += skip as u64;
        self.discard(skip);
    }

    pub fn next_frame(&mut self) -> Option<Frame> {
        loop {
            self.hunt();
            if self.buf.len() < HEADER_LEN {
                return None;
            }
            let b = &self.buf;
            if b[2] != VERSION {
                self.stats.bad_version += 1;
                self.discard(MAGIC.len());
                continue;
            }
            let len = u16::from_be_bytes([b[16], b[17]]) as usize;
            if len > MAX_PAYLOAD {
                self.stats.oversize += 1;
                self.discard(MAGIC.len());
                continue;
            }
            let total = HEADER_LEN + len + CRC_LEN;
            if self.buf.len() < total {
                return None;
            }
            let body = &self.buf[2..HEADER_LEN + len];
            let want = u32::from_be_bytes(self.buf[total - 4..total].try_into().expect("4 bytes"));
            if crc32fast::hash(body) != want {
                self.stats.bad_crc += 1;
                self.discard(MAGIC.len());
                continue;
            }
            let b = &self.buf;
            let Some(ftype) = FrameType::from_u8(b[3]) else {
                self.stats.bad_type += 1;
                self.discard(total);
                continue;
            };
            let frame = Frame {
                ftype,
                seq: u32::from_be_bytes(b[4..8].try_into().expect("4 bytes")),
                timestamp_ms: u64::from_be_bytes(b[8..16].try_into().expect("8 bytes")),
                payload: b[HEADER_LEN..HEADER_LEN + len].to_vec(),
            };
            self.discard(total);
            self.stats.frames += 1;
            return Some(frame);
        }
    }

    /// Feeds `bytes` and returns every frame completed by them.
    pub fn feed(&mut self, bytes: &[u8]) -> Vec<Frame> {
        self.push(bytes);
        std::iter::from_fn(|| self.next_frame()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Bitwise reflected CRC-32, polynomial 0xEDB88320, written out longhand.
    fn crc32_oracle(data: &[u8]) -> u32 {
        let mut crc = 0xFFFF_FFFFu32;
        for &byte in data {
            crc ^= byte as u32;
            for _ in 0..8 {
                let lsb = crc & 1;
                crc >>= 1;
                if lsb == 1 {
                    crc ^= 0xEDB8_8320;
                }
            }
        }
        !crc
    }

    fn hb(seq: u32) -> Frame {
        Frame::new(FrameType::Heartbeat, seq, 1000, Vec::new())
    }

    #[test]
    fn oracle_matches_check_value() {
        assert_eq!(crc32_oracle(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn empty_heartbeat_is_22_bytes() {
        let bytes = hb(7).encode().unwrap();
        assert_eq!(bytes.len(), 2 + 1 + 1 + 4 + 8 + 2 + 4);
        assert_eq!(&bytes[..4], &[0x5C, 0xA7, 0x01, 0x06]);
        assert_eq!(&bytes[4..8], &[0, 0, 0, 7]);
        assert_eq!(&bytes[8..16], &1000u64.to_be_bytes());
        assert_eq!(&bytes[16..18], &[0, 0]);
        let crc = crc32_oracle(&bytes[2..18]);
        assert_eq!(&bytes[18..], &crc.to_be_bytes());
    }

    #[test]
    fn oversize_payload_is_refused() {
        let f = Frame::new(FrameType::TmSc, 0, 0, vec![b' '; MAX_PAYLOAD + 1]);
        assert_eq!(f.encode(), Err(FrameError::PayloadTooLong(MAX_PAYLOAD + 1)));
        let f = Frame::new(FrameType::TmSc, 0, 0, vec![b' '; MAX_PAYLOAD]);
        assert_eq!(f.encode().unwrap().len(), MAX_PAYLOAD + 22);
    }

    #[test]
    fn garbage_is_skipped_and_counted() {
        let mut d = FrameDecoder::default();
        let mut bytes = vec![0x00, 0x5C, 0x11, 0xFF];
        bytes.extend(hb(1).encode().unwrap());
        let frames = d.feed(&bytes);
        assert_eq!(frames, vec![hb(1)]);
        assert_eq!(d.stats.skipped_bytes, 4);
        assert_eq!(d.buffered(), 0);
    }

    #[test]
    fn bad_version_is_dropped_and_decoder_recovers() {
        let mut bad = hb(1).encode().unwrap();
        bad[2] = 0x02;
        let mut d = FrameDecoder::default();
        let mut bytes = bad;
        bytes.extend(hb(2).encode().unwrap());
        assert_eq!(d.feed(&bytes), vec![hb(2)]);
        assert_eq!(d.stats.bad_version, 1);
    }

    #[test]
    fn unknown_type_is_dropped() {
        let mut bytes = hb(1).encode().unwrap();
        bytes[3] = 0x09;
        let crc = crc32fast::hash(&bytes[2..18]);
        bytes[18..].copy_from_slice(&crc.to_be_bytes());
        let mut d = FrameDecoder::default();
        assert!(d.feed(&bytes).is_empty());
        assert_eq!(d.stats.bad_type, 1);
    }

    #[test]
    fn split_magic_across_reads() {
        let bytes = hb(3).encode().unwrap();
        let mut d = FrameDecoder::default();
        assert!(d.feed(&bytes[..1]).is_empty());
        assert!(d.feed(&bytes[1..10]).is_empty());
        assert_eq!(d.feed(&bytes[10..]), vec![hb(3)]);
        assert_eq!(d.stats.skipped_bytes, 0);
    }

    #[test]
    fn decode_frame_rejects_trailing_bytes() {
        let mut bytes = hb(3).encode().unwrap();
        assert_eq!(decode_frame(&bytes), Some(hb(3)));
        bytes.push(0);
        assert_eq!(decode_frame(&bytes), None);
    }

    fn arb_frame() -> impl Strategy<Value = Frame> {
        (
            prop::sample::select(FrameType::ALL.to_vec()),
            any::<u32>(),
            any::<u64>(),
            prop::collection::vec(any::<u8>(), 0..600),
        )
            .prop_map(|(t, s, ts, p)| Frame::new(t, s, ts, p))
    }

    proptest! {
        #[test]
        fn round_trip(f in arb_frame()) {
            let bytes = f.encode().unwrap();
            prop_assert_eq!(bytes.len(), f.wire_len());
            prop_assert_eq!(decode_frame(&bytes), Some(f));
        }

        #[test]
        fn crc_agrees_with_oracle(f in arb_frame()) {
            let bytes = f.encode().unwrap();
            let n = bytes.len();
            let crc = u32::from_be_bytes(bytes[n - 4..].try_into().unwrap());
            prop_assert_eq!(crc, crc32_oracle(&bytes[2..n - 4]));
        }

        #[test]
        fn single_bit_flip_is_rejected(f in arb_frame(), pick in any::<prop::sample::Index>(), bit in 0u8..8) {
            let mut bytes = f.encode().unwrap();
            let n = bytes.len();
            // anywhere in version..payload
            let i = 2 + pick.index(n - 6);
            bytes[i] ^= 1 << bit;
            let mut d = FrameDecoder::default();
            let got = d.feed(&bytes);
            prop_assert!(got.iter().all(|g| *g != f));
            prop_assert!(got.is_empty());
        }

        #[test]
        fn arbitrary_chunking_yields_the_same_frames(
            frames in prop::collection::vec(arb_frame(), 1..6),
            junk in prop::collection::vec(any::<u8>(), 0..40),
            cuts in prop::collection::vec(1usize..50, 1..40),
        ) {
            let mut stream = junk.iter().copied().filter(|b| *b != MAGIC[0]).collect::<Vec<_>>();
            for f in &frames {
                stream.extend(f.encode().unwrap());
            }
            let mut d = FrameDecoder::default();
            let mut got = Vec::new();
            let mut rest = &stream[..];
            for c in cuts.iter().cycle() {
                if rest.is_empty() { break; }
                let k = (*c).min(rest.len());
                got.extend(d.feed(&rest[..k]));
                rest = &rest[k..];
            }
            prop_assert_eq!(got, frames);
        }
    }
}
