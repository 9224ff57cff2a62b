use async_trait::async_trait;
use chrono::NaiveDateTime;

use super::nmea::{self, Gga, LineBuffer, Sentence};
use super::SubsystemEnv;
use crate::domain::state::GpsFix;
use crate::domain::OperatingMode;
use crate::executor::{TaskBody, TaskCtx};
use crate::halsim::gps::{GPS_BAUD, UART_FIFO_BYTES};
use crate::time::Delay;

const PORT: u8 = 0;

/// Drains the GPS UART every cycle and publishes the newest fix.
pub struct GpsMeasurer {
    env: SubsystemEnv,
    lines: LineBuffer,
    open: bool,
    last_gga: Option<Gga>,
}

impl GpsMeasurer {
    pub fn new(env: SubsystemEnv) -> Self {
        Self {
            env,
            lines: LineBuffer::default(),
            open: false,
            last_gga: None,
        }
    }

    /// Decodes every complete line; returns (fixes, parse errors).
    pub fn decode(&mut self, bytes: &[u8], t_ms: u64) -> (Vec<GpsFix>, u64) {
        let mut fixes = Vec::new();
        let mut errors = 0;
        for line in self.lines.push(bytes) {
            match nmea::parse(&line) {
                Ok(Sentence::Gga(g)) => self.last_gga = Some(g),
                Ok(Sentence::Rmc(r)) if r.valid => {
                    let gga = self.last_gga.filter(|g| g.time == r.time && g.quality > 0);
                    let utc_ms = NaiveDateTime::new(r.date, r.time)
                        .and_utc()
                        .timestamp_millis();
                    fixes.push(GpsFix {
                        lat_deg: r.lat_deg,
                        lon_deg: r.lon_deg,
                        alt_m: gga.map_or(f64::NAN, |g| g.alt_m),
                        utc_ms,
                        t_ms,
                        satellites: gga.map_or(0, |g| g.satellites),
                    });
                }
                Ok(Sentence::Rmc(_)) => {}
                Err(_) => errors += 1,
            }
        }
        (fixes, errors)
    }
}

#[async_trait(?Send)]
impl TaskBody for GpsMeasurer {
    async fn run(&mut self, ctx: &TaskCtx) {
        let caller = ctx.caller();
        let pool = self.env.pool.clone();
        if pool.nads_mode.get(&caller) == OperatingMode::Shutdown {
            return;
        }
        if !self.open {
            if self.env.hal.uart_open(PORT, GPS_BAUD).is_err() {
                return;
            }
            self.open = true;
        }
        let bytes = match self.env.hal.uart_read(PORT, UART_FIFO_BYTES) {
            Ok(b) => b,
            Err(_) => {
                self.open = false;
                return;
            }
        };
        let now_ms = ctx.now_ms();
        let (fixes, errors) = self.decode(&bytes, now_ms);
        if fixes.is_empty() && errors == 0 {
            return;
        }
        pool.nads.update(&caller, |s| {
            s.gps_parse_errors += errors;
            if let Some(last) = fixes.last() {
                let mut fix = *last;
                if fix.alt_m.is_nan() {
                    fix.alt_m = s.fix.map_or(f64::NAN, |f| f.alt_m);
                }
                s.fix = Some(fix);
                s.gps_fixes += fixes.len() as u64;
                if s.epoch_offset_ms.is_none() {
                    s.epoch_offset_ms = Some(fix.utc_ms - now_ms as i64);
                }
            }
        });
    }
}
