//! 16-bit four-input delta-sigma ADC with a programmable full scale and
//! single-shot conversions, register compatible with the ADS1115 family.
//!
//! | reg  | name       | notes                                   |
//! |------|------------|-----------------------------------------|
//! | 0x00 | CONVERSION | i16 big-endian, last completed result   |
//! | 0x01 | CONFIG     | OS, MUX, PGA, MODE, DR, comparator bits |

use super::bus::{DevCtx, I2cDevice};
use super::topology::{PowerDomain, Rtu};
use super::HalError;

pub const FULL_SCALE_V: f64 = 4.096;
pub const LSB_V: f64 = FULL_SCALE_V / 32768.0;

pub const REG_CONVERSION: u8 = 0x00;
pub const REG_CONFIG: u8 = 0x01;

pub const CFG_OS: u16 = 1 << 15;
pub const CFG_MODE_SINGLE: u16 = 1 << 8;
pub const CFG_PGA_4V096: u16 = 0b001 << 9;
const CFG_PGA_MASK: u16 = 0b111 << 9;
const CFG_MUX_SHIFT: u16 = 12;
const CFG_DR_SHIFT: u16 = 5;
const POWER_ON_CONFIG: u16 = 0x8583;

/// Output data rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataRate {
    Sps8,
    Sps16,
    Sps32,
    Sps64,
    Sps128,
    Sps250,
    Sps475,
    Sps860,
}

impl DataRate {
    const TABLE: [(DataRate, u32); 8] = [
        (DataRate::Sps8, 8),
        (DataRate::Sps16, 16),
        (DataRate::Sps32, 32),
        (DataRate::Sps64, 64),
        (DataRate::Sps128, 128),
        (DataRate::Sps250, 250),
        (DataRate::Sps475, 475),
        (DataRate::Sps860, 860),
    ];

    pub fn code(self) -> u16 {
        Self::TABLE.iter().position(|(r, _)| *r == self).unwrap() as u16
    }

    pub fn from_code(code: u16) -> DataRate {
        Self::TABLE[(code & 0b111) as usize].0
    }

    pub fn sps(self) -> u32 {
        Self::TABLE[self.code() as usize].1
    }

    pub fn conversion_ns(self) -> u64 {
        1_000_000_000 / self.sps() as u64
    }
}

/// Ideal quantiser: `round(v / FS · 32768)` saturated to the i16 range.
pub fn volts_to_raw(v: f64) -> i16 {
    (v / FULL_SCALE_V * 32768.0)
        .round()
        .clamp(-32768.0, 32767.0) as i16
}

pub fn raw_to_volts(raw: i16) -> f64 {
    raw as f64 * LSB_V
}

/// CONFIG word for a single-ended single-shot conversion of `input`.
pub fn config_word(input: u8, rate: DataRate, start: bool) -> u16 {
    let mux = 0b100 | (input as u16 & 0b11);
    let os = if start { CFG_OS } else { 0 };
    os | (mux << CFG_MUX_SHIFT)
        | CFG_PGA_4V096
        | CFG_MODE_SINGLE
        | (rate.code() << CFG_DR_SHIFT)
        | 0b0_0011
}

#[derive(Debug, Clone, Copy)]
struct Conversion {
    done_ns: u64,
    raw: i16,
}

pub struct Adc {
    rtu: Rtu,
    pointer: u8,
    config: u16,
    configured: bool,
    last: i16,
    pending: Option<Conversion>,
    conversions: u64,
}

impl Adc {
    pub fn new(rtu: Rtu) -> Self {
        Self {
            rtu,
            pointer: 0,
            config: POWER_ON_CONFIG,
            configured: false,
            last: 0,
            pending: None,
            conversions: 0,
        }
    }

    fn settle(&mut self, now_ns: u64) {
        if let Some(c) = self.pending {
            if now_ns >= c.done_ns {
                self.last = c.raw;
                self.pending = None;
            }
        }
    }

    fn start(&mut self, ctx: &DevCtx<'_>) -> Result<(), HalError> {
        if !self.configured || self.config & CFG_PGA_MASK != CFG_PGA_4V096 {
            return Err(HalError::Unconfigured);
        }
        let mux = (self.config >> CFG_MUX_SHIFT) & 0b111;
        if mux & 0b100 == 0 {
            return Err(HalError::Unconfigured);
        }
        let input = (mux & 0b11) as u8;
        let rate = DataRate::from_code(self.config >> CFG_DR_SHIFT);
        let v = ctx.world.analog_volts(self.rtu, input, ctx.now_ns);
        self.pending = Some(Conversion {
            done_ns: ctx.now_ns + rate.conversion_ns(),
            raw: volts_to_raw(v),
        });
        self.conversions += 1;
        Ok(())
    }
}

impl I2cDevice for Adc {
    fn name(&self) -> &'static str {
        match self.rtu {
            Rtu::Tmu => "ADC-TMU",
            Rtu::Sdpu => "ADC-SDPU",
        }
    }

    fn domain(&self) -> PowerDomain {
        self.rtu.domain()
    }

    fn write(&mut self, ctx: &DevCtx<'_>, bytes: &[u8]) -> Result<(), HalError> {
        self.settle(ctx.now_ns);
        let (&reg, data) = bytes.split_first().expect("non-empty write");
        if reg > REG_CONFIG {
            return Err(HalError::Register(reg, "no such register".into()));
        }
        self.pointer = reg;
        if data.is_empty() {
            return Ok(());
        }
        if reg != REG_CONFIG || data.len() != 2 {
            return Err(HalError::Register(
                reg,
                "expected a 16-bit CONFIG write".into(),
            ));
        }
        let word = u16::from_be_bytes([data[0], data[1]]);
        self.config = word & !CFG_OS;
        self.configured = word & CFG_PGA_MASK == CFG_PGA_4V096;
        if word & CFG_OS != 0 {
            if self.pending.is_some() {
                return Err(HalError::Busy);
            }
            self.start(ctx)?;
        }
        Ok(())
    }

    fn read(&mut self, ctx: &DevCtx<'_>, len: usize) -> Result<Vec<u8>, HalError> {
        self.settle(ctx.now_ns);
        let word = match self.pointer {
            REG_CONVERSION => {
                if !self.configured {
                    return Err(HalError::Unconfigured);
                }
                self.last as u16
            }
            _ => {
                let idle = if self.pending.is_none() { CFG_OS } else { 0 };
                self.config | idle
            }
        };
        let b = word.to_be_bytes();
        Ok((0..len).map(|i| b[i % 2]).collect())
    }

    fn power_reset(&mut self) {
        *self = Adc::new(self.rtu);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiser_examples() {
        assert_eq!(volts_to_raw(0.0), 0);
        assert_eq!(volts_to_raw(4.096), 32767);
        assert_eq!(volts_to_raw(-5.0), -32768);
        let oracle = (2.3559f64 / 4.096 * 32768.0).round() as i16;
        assert_eq!(volts_to_raw(2.3559), oracle);
        assert_eq!(oracle, 18847);
    }

    #[test]
    fn lsb_is_125_microvolts() {
        assert!((LSB_V - 125e-6).abs() < 1e-15);
        assert!((raw_to_volts(8000) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rates() {
        assert_eq!(DataRate::Sps8.conversion_ns(), 125_000_000);
        assert_eq!(
            DataRate::from_code(DataRate::Sps128.code()),
            DataRate::Sps128
        );
        let w = config_word(2, DataRate::Sps8, true);
        assert_eq!(w & CFG_OS, CFG_OS);
        assert_eq!((w >> 12) & 0b111, 0b110);
    }
}
