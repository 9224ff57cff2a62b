//! GPS receiver streaming NMEA 0183 GGA + RMC sentences over a UART.

use std::collections::VecDeque;

use chrono::{DateTime, Timelike, Utc};

use super::topology::PowerDomain;
use super::world::World;
use super::HalError;

pub const GPS_BAUD: u32 = 115_200;
pub const GPS_PERIOD_NS: u64 = 200_000_000;
/// Offset of the first epoch so a reader polling on the 200 ms grid always
/// finds a complete epoch waiting.
pub const GPS_PHASE_NS: u64 = 100_000_000;
pub const UART_FIFO_BYTES: usize = 4096;

/// Ten bits per character (start, 8 data, stop).
pub fn byte_time_ns(baud: u32) -> u64 {
    10 * 1_000_000_000 / baud as u64
}

/// XOR of every byte between `$` and `*`.
pub fn nmea_checksum(body: &str) -> u8 {
    body.bytes().fold(0, |acc, b| acc ^ b)
}

fn wrap(body: &str) -> String {
    format!("${body}*{:02X}\r\n", nmea_checksum(body))
}

fn lat_field(lat: f64) -> (String, char) {
    let h = if lat >= 0.0 { 'N' } else { 'S' };
    let a = lat.abs();
    let deg = a.trunc();
    (format!("{:02}{:08.5}", deg as u32, (a - deg) * 60.0), h)
}

fn lon_field(lon: f64) -> (String, char) {
    let h = if lon >= 0.0 { 'E' } else { 'W' };
    let a = lon.abs();
    let deg = a.trunc();
    (format!("{:03}{:08.5}", deg as u32, (a - deg) * 60.0), h)
}

/// GGA and RMC sentences for one epoch.
pub fn epoch_sentences(utc_ms: i64, lat: f64, lon: f64, alt_m: f64, speed_kn: f64) -> [String; 2] {
    let dt = DateTime::<Utc>::from_timestamp_millis(utc_ms).expect("UTC in range");
    let hms = format!(
        "{:02}{:02}{:02}.{:02}",
        dt.hour(),
        dt.minute(),
        dt.second(),
        dt.timestamp_subsec_millis() / 10
    );
    let date = dt.format("%d%m%y").to_string();
    let (la, ns) = lat_field(lat);
    let (lo, ew) = lon_field(lon);
    let gga = format!("GPGGA,{hms},{la},{ns},{lo},{ew},1,09,0.9,{alt_m:.1},M,51.2,M,,");
    let rmc = format!("GPRMC,{hms},A,{la},{ns},{lo},{ew},{speed_kn:.2},0.00,{date},,,A");
    [wrap(&gga), wrap(&rmc)]
}

pub(crate) struct Uart {
    open: bool,
    baud: u32,
    fifo: VecDeque<(u64, u8)>,
    next_epoch: u64,
    synced_ns: u64,
    pub(crate) overruns: u64,
    pub(crate) epochs: u64,
}

impl Uart {
    pub(crate) fn new() -> Self {
        Self {
            open: false,
            baud: GPS_BAUD,
            fifo: VecDeque::new(),
            next_epoch: 0,
            synced_ns: 0,
            overruns: 0,
            epochs: 0,
        }
    }

    pub(crate) fn open(&mut self, baud: u32) {
        self.open = true;
        self.baud = baud;
    }

    pub(crate) fn close(&mut self) {
        self.open = false;
        self.fifo.clear();
    }

    /// Generates every epoch due by `now_ns`. Epochs falling while the NADS
    /// rail is off produce nothing.
    pub(crate) fn sync(&mut self, world: &World, now_ns: u64) {
        let powered = world.is_powered(PowerDomain::Nads);
        loop {
            let t = GPS_PHASE_NS + self.next_epoch * GPS_PERIOD_NS;
            if t > now_ns {
                break;
            }
            self.next_epoch += 1;
            if !powered || !self.open {
                continue;
            }
            self.epochs += 1;
            let env = world.env(t);
            let step = byte_time_ns(self.baud.min(GPS_BAUD));
            let mut arrival = t;
            for s in epoch_sentences(
                world.utc_ms(t),
                env.latitude,
                env.longitude,
                env.altitude,
                0.0,
            ) {
                for b in s.bytes() {
                    if self.fifo.len() >= UART_FIFO_BYTES {
                        self.overruns += 1;
                    } else {
                        self.fifo.push_back((arrival, b));
                    }
                    arrival += step;
                }
            }
        }
        self.synced_ns = self.synced_ns.max(now_ns);
    }

    pub(crate) fn read(
        &mut self,
        world: &World,
        now_ns: u64,
        max: usize,
    ) -> Result<Vec<u8>, HalError> {
        if !self.open {
            return Err(HalError::PortClosed(0));
        }
        self.sync(world, now_ns);
        let mut out = Vec::new();
        while out.len() < max {
            match self.fifo.front() {
                Some(&(t, b)) if t <= now_ns => {
                    out.push(b);
                    self.fifo.pop_front();
                }
                _ => break,
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_and_framing() {
        let [gga, rmc] = epoch_sentences(0, 40.437699, -3.672525, 667.0, 0.0);
        for s in [&gga, &rmc] {
            assert!(s.ends_with("\r\n"));
            let star = s.rfind('*').unwrap();
            let body = &s[1..star];
            assert_eq!(
                u8::from_str_radix(&s[star + 1..star + 3], 16).unwrap(),
                nmea_checksum(body)
            );
        }
        assert!(
            gga.starts_with("$GPGGA,000000.00,4026.26194,N,00340.35150,W,1,"),
            "{gga}"
        );
    }

    #[test]
    fn byte_pacing() {
        assert_eq!(byte_time_ns(115_200), 86_805);
    }
}
