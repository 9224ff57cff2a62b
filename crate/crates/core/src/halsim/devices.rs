//! Register models of the digital sensors. The maps are minimal and only
//! cover what the onboard drivers use.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::bus::{DevCtx, I2cDevice};
use super::topology::PowerDomain;
use super::HalError;

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    }
}

fn window(regs: &[u8], start: u8, len: usize) -> Vec<u8> {
    (0..len)
        .map(|i| regs.get(start as usize + i).copied().unwrap_or(0))
        .collect()
}

// ---------------------------------------------------------------------------
// IMU

pub mod imu_reg {
    pub const CHIP_ID: u8 = 0x00;
    pub const ACC_DATA: u8 = 0x08;
    pub const MAG_DATA: u8 = 0x0E;
    pub const GYR_DATA: u8 = 0x14;
    pub const CALIB_STAT: u8 = 0x35;
    pub const OPR_MODE: u8 = 0x3D;
    pub const SYS_TRIGGER: u8 = 0x3F;

    pub const CHIP_ID_VALUE: u8 = 0xA0;
    pub const MODE_CONFIG: u8 = 0x00;
    pub const MODE_NDOF: u8 = 0x0C;
    pub const TRIGGER_RESTART: u8 = 0x20;
    pub const TRIGGER_CALIBRATE: u8 = 0x01;

    /// LSB per m/s².
    pub const ACC_SCALE: f64 = 100.0;
    /// LSB per µT.
    pub const MAG_SCALE: f64 = 16.0;
    /// LSB per °/s.
    pub const GYR_SCALE: f64 = 16.0;
}

pub const IMU_UPDATE_NS: u64 = 10_000_000;
pub const IMU_BOOT_NS: u64 = 650_000_000;
pub const IMU_CALIBRATION_NS: u64 = 1_000_000_000;

/// Nine-axis orientation sensor with a 100 Hz internal update.
pub struct Imu {
    pointer: u8,
    mode: u8,
    booting_until: u64,
    calibrating_since: Option<u64>,
    calib: u8,
    tick: Option<u64>,
    sample: [i16; 9],
    rng: ChaCha8Rng,
    pub restarts: u32,
    pub calibrations: u32,
}

impl Imu {
    pub fn new(seed: u64) -> Self {
        Self {
            pointer: 0,
            mode: imu_reg::MODE_CONFIG,
            booting_until: 0,
            calibrating_since: None,
            calib: 0,
            tick: None,
            sample: [0; 9],
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x1A0_0001),
            restarts: 0,
            calibrations: 0,
        }
    }

    fn refresh(&mut self, now_ns: u64) {
        if let Some(since) = self.calibrating_since {
            if now_ns >= since + IMU_CALIBRATION_NS {
                self.calib = 0xFF;
                self.calibrating_since = None;
            }
        }
        let tick = now_ns / IMU_UPDATE_NS;
        if self.tick == Some(tick) {
            return;
        }
        self.tick = Some(tick);
        if self.mode == imu_reg::MODE_CONFIG {
            self.sample = [0; 9];
            return;
        }
        let t = (tick * IMU_UPDATE_NS) as f64 * 1e-9;
        let sway = 0.05 * (2.0 * std::f64::consts::PI * t / 8.0).sin();
        let acc = [sway, 0.5 * sway, 9.80665];
        let mag = [25.1, -2.3, 38.4];
        let gyr = [0.2 * sway, -0.1 * sway, 0.5];
        let mut out = [0i16; 9];
        for i in 0..3 {
            let a = acc[i] + gaussian(&mut self.rng, 0.02);
            let m = mag[i] + gaussian(&mut self.rng, 0.3);
            let g = gyr[i] + gaussian(&mut self.rng, 0.05);
            out[i] = (a * imu_reg::ACC_SCALE).round() as i16;
            out[3 + i] = (m * imu_reg::MAG_SCALE).round() as i16;
            out[6 + i] = (g * imu_reg::GYR_SCALE).round() as i16;
        }
        self.sample = out;
    }

    fn regs(&self) -> [u8; 0x40] {
        let mut r = [0u8; 0x40];
        r[imu_reg::CHIP_ID as usize] = imu_reg::CHIP_ID_VALUE;
        for (i, v) in self.sample.iter().enumerate() {
            let b = v.to_le_bytes();
            r[imu_reg::ACC_DATA as usize + 2 * i] = b[0];
            r[imu_reg::ACC_DATA as usize + 2 * i + 1] = b[1];
        }
        r[imu_reg::CALIB_STAT as usize] = self.calib;
        r[imu_reg::OPR_MODE as usize] = self.mode;
        r
    }
}

impl I2cDevice for Imu {
    fn name(&self) -> &'static str {
        "IMU"
    }

    fn domain(&self) -> PowerDomain {
        PowerDomain::Nads
    }

    fn write(&mut self, ctx: &DevCtx<'_>, bytes: &[u8]) -> Result<(), HalError> {
        if ctx.now_ns < self.booting_until {
            return Err(HalError::Busy);
        }
        self.refresh(ctx.now_ns);
        let (&reg, data) = bytes.split_first().expect("non-empty write");
        self.pointer = reg;
        let Some(&value) = data.first() else {
            return Ok(());
        };
        match reg {
            imu_reg::OPR_MODE => {
                self.mode = value;
                self.tick = None;
            }
            imu_reg::SYS_TRIGGER if value & imu_reg::TRIGGER_RESTART != 0 => {
                let restarts = self.restarts + 1;
                let calibrations = self.calibrations;
                let rng = self.rng.clone();
                *self = Imu {
                    booting_until: ctx.now_ns + IMU_BOOT_NS,
                    restarts,
                    calibrations,
                    rng,
                    ..Imu::new(0)
                };
            }
            imu_reg::SYS_TRIGGER if value & imu_reg::TRIGGER_CALIBRATE != 0 => {
                self.calib = 0;
                self.calibrating_since = Some(ctx.now_ns);
                self.calibrations += 1;
            }
            imu_reg::SYS_TRIGGER => {}
            _ => return Err(HalError::Register(reg, "read-only".into())),
        }
        Ok(())
    }

    fn read(&mut self, ctx: &DevCtx<'_>, len: usize) -> Result<Vec<u8>, HalError> {
        if ctx.now_ns < self.booting_until {
            return Err(HalError::Busy);
        }
        self.refresh(ctx.now_ns);
        Ok(window(&self.regs(), self.pointer, len))
    }

    fn power_reset(&mut self) {
        let rng = self.rng.clone();
        *self = Imu { rng, ..Imu::new(0) };
    }
}

// ---------------------------------------------------------------------------
// Barometer

pub mod baro_reg {
    /// u24 big-endian, 0.01 mbar.
    pub const PRESSURE: u8 = 0x00;
    /// i16 big-endian, 0.01 °C.
    pub const TEMPERATURE: u8 = 0x03;
    pub const CONFIG: u8 = 0x10;
}

/// Absolute digital barometer on the always-on rail.
pub struct Barometer {
    pointer: u8,
    config: u8,
    sigma_mbar: f64,
    rng: ChaCha8Rng,
}

impl Barometer {
    pub fn new(seed: u64, sigma_mbar: f64) -> Self {
        Self {
            pointer: 0,
            config: 0,
            sigma_mbar,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0xBA20),
        }
    }
}

impl I2cDevice for Barometer {
    fn name(&self) -> &'static str {
        "Barometer"
    }

    fn domain(&self) -> PowerDomain {
        PowerDomain::Obc
    }

    fn write(&mut self, _ctx: &DevCtx<'_>, bytes: &[u8]) -> Result<(), HalError> {
        let (&reg, data) = bytes.split_first().expect("non-empty write");
        self.pointer = reg;
        match (reg, data.first()) {
            (_, None) => Ok(()),
            (baro_reg::CONFIG, Some(&v)) => {
                self.config = v;
                Ok(())
            }
            _ => Err(HalError::Register(reg, "read-only".into())),
        }
    }

    fn read(&mut self, ctx: &DevCtx<'_>, len: usize) -> Result<Vec<u8>, HalError> {
        let env = ctx.world.env(ctx.now_ns);
        let p = (env.pressure + gaussian(&mut self.rng, self.sigma_mbar)).max(0.0);
        let p_raw = ((p * 100.0).round() as u32).min(0xFF_FFFF);
        let t_raw = (env.ambient_temp * 100.0).round() as i16;
        let mut regs = [0u8; 0x11];
        regs[0..3].copy_from_slice(&p_raw.to_be_bytes()[1..]);
        regs[3..5].copy_from_slice(&t_raw.to_be_bytes());
        regs[baro_reg::CONFIG as usize] = self.config;
        Ok(window(&regs, self.pointer, len))
    }
}

// ---------------------------------------------------------------------------
// Power monitor

pub mod ina_reg {
    pub const CONFIG: u8 = 0x00;
    pub const SHUNT: u8 = 0x01;
    pub const BUS: u8 = 0x02;
    pub const POWER: u8 = 0x03;
    pub const CURRENT: u8 = 0x04;
    pub const CALIBRATION: u8 = 0x05;
    pub const MANUFACTURER: u8 = 0xFE;

    pub const BUS_LSB_V: f64 = 1.25e-3;
    pub const SHUNT_LSB_V: f64 = 2.5e-6;
    pub const CURRENT_LSB_A: f64 = 1.0e-4;
    pub const POWER_LSB_W: f64 = 25.0 * CURRENT_LSB_A;
    pub const SHUNT_OHM: f64 = 0.1;
    /// 0.00512 / (CURRENT_LSB · R_shunt)
    pub const CALIBRATION_VALUE: u16 = 512;
}

/// Bus voltage / current / power monitor on the PCU.
pub struct PowerMonitor {
    pointer: u8,
    config: u16,
    calibration: u16,
    rng: ChaCha8Rng,
    sigma_v: f64,
    sigma_a: f64,
}

impl PowerMonitor {
    pub fn new(seed: u64) -> Self {
        Self {
            pointer: 0,
            config: 0x4127,
            calibration: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x1A22_6000),
            sigma_v: 0.01,
            sigma_a: 5.0e-4,
        }
    }
}

impl I2cDevice for PowerMonitor {
    fn name(&self) -> &'static str {
        "INA226"
    }

    fn domain(&self) -> PowerDomain {
        PowerDomain::Obc
    }

    fn write(&mut self, _ctx: &DevCtx<'_>, bytes: &[u8]) -> Result<(), HalError> {
        let (&reg, data) = bytes.split_first().expect("non-empty write");
        self.pointer = reg;
        if data.is_empty() {
            return Ok(());
        }
        if data.len() != 2 {
            return Err(HalError::Register(reg, "16-bit register".into()));
        }
        let w = u16::from_be_bytes([data[0], data[1]]);
        match reg {
            ina_reg::CONFIG => self.config = w,
            ina_reg::CALIBRATION => self.calibration = w & 0x7FFF,
            _ => return Err(HalError::Register(reg, "read-only".into())),
        }
        Ok(())
    }

    fn read(&mut self, ctx: &DevCtx<'_>, len: usize) -> Result<Vec<u8>, HalError> {
        use ina_reg::*;
        let v = ctx.world.supply_voltage() + gaussian(&mut self.rng, self.sigma_v);
        let i = ctx.world.load_current_a() + gaussian(&mut self.rng, self.sigma_a);
        let bus = (v / BUS_LSB_V).round().clamp(0.0, 32767.0) as u16;
        let shunt = (i * SHUNT_OHM / SHUNT_LSB_V)
            .round()
            .clamp(-32768.0, 32767.0) as i16;
        let current = (shunt as i32 * self.calibration as i32 / 2048) as i16;
        let power = ((current.max(0) as i64 * bus as i64) / 20_000) as u16;
        let word = match self.pointer {
            CONFIG => self.config,
            SHUNT => shunt as u16,
            BUS => bus,
            POWER => power,
            CURRENT => current as u16,
            CALIBRATION => self.calibration,
            MANUFACTURER => 0x5449,
            r => return Err(HalError::Register(r, "no such register".into())),
        };
        let b = word.to_be_bytes();
        Ok((0..len).map(|k| b[k % 2]).collect())
    }
}

// ---------------------------------------------------------------------------
// Board thermometer

/// Digital thermometer with 1 °C resolution.
pub struct Thermometer {
    pointer: u8,
    standby: bool,
}

impl Thermometer {
    pub fn new() -> Self {
        Self {
            pointer: 0,
            standby: false,
        }
    }
}

impl Default for Thermometer {
    fn default() -> Self {
        Self::new()
    }
}

impl I2cDevice for Thermometer {
    fn name(&self) -> &'static str {
        "TC74"
    }

    fn domain(&self) -> PowerDomain {
        PowerDomain::Obc
    }

    fn write(&mut self, _ctx: &DevCtx<'_>, bytes: &[u8]) -> Result<(), HalError> {
        let (&reg, data) = bytes.split_first().expect("non-empty write");
        self.pointer = reg;
        if let (0x01, Some(&v)) = (reg, data.first()) {
            self.standby = v & 0x80 != 0;
        }
        Ok(())
    }

    fn read(&mut self, ctx: &DevCtx<'_>, len: usize) -> Result<Vec<u8>, HalError> {
        let t = ctx.world.board_temp_c().round().clamp(-65.0, 127.0) as i8;
        let regs = [t as u8, if self.standby { 0x80 } else { 0x40 }];
        Ok(window(&regs, self.pointer, len))
    }
}
