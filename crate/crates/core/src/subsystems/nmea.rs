//! NMEA 0183 decoding for the GGA and RMC sentences.

use chrono::{NaiveDate, NaiveTime};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NmeaError {
    #[error("sentence does not start with `$`")]
    NoStart,
    #[error("missing or malformed checksum")]
    NoChecksum,
    #[error("checksum mismatch: computed {computed:02X}, sentence says {stated:02X}")]
    Checksum { computed: u8, stated: u8 },
    #[error("field `{0}` malformed")]
    Field(&'static str),
    #[error("unsupported sentence `{0}`")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gga {
    pub time: NaiveTime,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub quality: u8,
    pub satellites: u8,
    pub alt_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rmc {
    pub time: NaiveTime,
    pub valid: bool,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub speed_kn: f64,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sentence {
    Gga(Gga),
    Rmc(Rmc),
}

/// Validates framing and checksum; returns the body between `$` and `*`.
pub fn verify(line: &str) -> Result<&str, NmeaError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let rest = line.strip_prefix('$').ok_or(NmeaError::NoStart)?;
    let (body, sum) = rest.rsplit_once('*').ok_or(NmeaError::NoChecksum)?;
    if sum.len() != 2 {
        return Err(NmeaError::NoChecksum);
    }
    let stated = u8::from_str_radix(sum, 16).map_err(|_| NmeaError::NoChecksum)?;
    let computed = body.bytes().fold(0u8, |a, b| a ^ b);
    if computed != stated {
        return Err(NmeaError::Checksum { computed, stated });
    }
    Ok(body)
}

fn time_field(s: &str) -> Result<NaiveTime, NmeaError> {
    let bad = NmeaError::Field("time");
    if s.len() < 6 || !s.is_char_boundary(6) {
        return Err(bad);
    }
    let h = s[0..2].parse().map_err(|_| bad.clone())?;
    let m = s[2..4].parse().map_err(|_| bad.clone())?;
    let sec: f64 = s[4..].parse().map_err(|_| bad.clone())?;
    let whole = sec.trunc() as u32;
    let ms = ((sec - sec.trunc()) * 1000.0).round() as u32;
    NaiveTime::from_hms_milli_opt(h, m, whole, ms).ok_or(bad)
}

fn coord(value: &str, hemi: &str, deg_digits: usize, name: &'static str) -> Result<f64, NmeaError> {
    if value.len() <= deg_digits || !value.is_char_boundary(deg_digits) {
        return Err(NmeaError::Field(name));
    }
    let deg: f64 = value[..deg_digits]
        .parse()
        .map_err(|_| NmeaError::Field(name))?;
    let min: f64 = value[deg_digits..]
        .parse()
        .map_err(|_| NmeaError::Field(name))?;
    if !(0.0..60.0).contains(&min) {
        return Err(NmeaError::Field(name));
    }
    let v = deg + min / 60.0;
    match hemi {
        "N" | "E" => Ok(v),
        "S" | "W" => Ok(-v),
        _ => Err(NmeaError::Field(name)),
    }
}

/// Parses one checksummed sentence.
pub fn parse(line: &str) -> Result<Sentence, NmeaError> {
    let body = verify(line)?;
    let f: Vec<&str> = body.split(',').collect();
    let kind = f[0];
    match kind.get(2..) {
        Some("GGA") => {
            if f.len() < 10 {
                return Err(NmeaError::Field("GGA field count"));
            }
            Ok(Sentence::Gga(Gga {
                time: time_field(f[1])?,
                lat_deg: coord(f[2], f[3], 2, "latitude")?,
                lon_deg: coord(f[4], f[5], 3, "longitude")?,
                quality: f[6].parse().map_err(|_| NmeaError::Field("quality"))?,
                satellites: f[7].parse().map_err(|_| NmeaError::Field("satellites"))?,
                alt_m: f[9].parse().map_err(|_| NmeaError::Field("altitude"))?,
            }))
        }
        Some("RMC") => {
            if f.len() < 10 {
                return Err(NmeaError::Field("RMC field count"));
            }
            let date =
                NaiveDate::parse_from_str(f[9], "%d%m%y").map_err(|_| NmeaError::Field("date"))?;
            Ok(Sentence::Rmc(Rmc {
                time: time_field(f[1])?,
                valid: f[2] == "A",
                lat_deg: coord(f[3], f[4], 2, "latitude")?,
                lon_deg: coord(f[5], f[6], 3, "longitude")?,
                speed_kn: f[7].parse().unwrap_or(0.0),
                date,
            }))
        }
        _ => Err(NmeaError::Unsupported(kind.to_owned())),
    }
}

/// Splits a byte stream into lines, keeping an incomplete tail for the next
/// chunk.
#[derive(Debug, Default)]
pub struct LineBuffer {
    buf: Vec<u8>,
}

/// Longest line kept before the buffer is discarded as garbage.
const MAX_LINE: usize = 256;

impl LineBuffer {
    pub fn push(&mut self, bytes: &[u8]) -> Vec<String> {
        let mut out = Vec::new();
        for &b in bytes {
            if b == b'\n' {
                let line = String::from_utf8_lossy(&self.buf)
                    .trim_end_matches('\r')
                    .to_owned();
                self.buf.clear();
                if !line.is_empty() {
                    out.push(line);
                }
            } else if b == b'$' && !self.buf.is_empty() {
                // a new start mid-line: the previous line was cut
                out.push(String::from_utf8_lossy(&self.buf).into_owned());
                self.buf.clear();
                self.buf.push(b);
            } else {
                self.buf.push(b);
                if self.buf.len() > MAX_LINE {
                    out.push(String::from_utf8_lossy(&self.buf).into_owned());
                    self.buf.clear();
                }
            }
        }
        out
    }
}
