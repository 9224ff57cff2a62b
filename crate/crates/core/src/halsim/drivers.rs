//! Equipment handlers: device-level operations built on bus transfers,
//! waiting out conversion and settling latencies in simulated time.

use super::adc::{self, DataRate};
use super::devices::{baro_reg, imu_reg, ina_reg};
use super::topology::{addr, BusId, MuxId, Rtu};
use super::{Hal, HalError};
use crate::time::Delay;

/// Writes the ADC's CONFIG register for single-shot conversions at `rate`.
pub fn adc_configure(hal: &Hal, rtu: Rtu, rate: DataRate) -> Result<(), HalError> {
    let (bus, a) = rtu.adc();
    let w = adc::config_word(0, rate, false).to_be_bytes();
    hal.i2c_transfer(bus, a, &[adc::REG_CONFIG, w[0], w[1]], 0)?;
    Ok(())
}

/// One single-shot conversion of `input` (0..=3). Waits the conversion
/// time, then polls the ready bit at 1 ms intervals.
pub async fn adc_read(hal: &Hal, d: &dyn Delay, rtu: Rtu, input: u8) -> Result<i16, HalError> {
    if input > 3 {
        return Err(HalError::Range(format!("ADC input {input} > 3")));
    }
    let (bus, a) = rtu.adc();
    let cfg = hal.i2c_transfer(bus, a, &[adc::REG_CONFIG], 2)?;
    let cur = u16::from_be_bytes([cfg[0], cfg[1]]);
    let rate = DataRate::from_code(cur >> 5);
    let mut w = adc::config_word(input, rate, true);
    // keep whatever full scale is programmed; the device rejects the wrong one
    w = (w & !(0b111 << 9)) | (cur & (0b111 << 9));
    let wb = w.to_be_bytes();
    hal.i2c_transfer(bus, a, &[adc::REG_CONFIG, wb[0], wb[1]], 0)?;
    d.delay_ns(rate.conversion_ns()).await;
    for _ in 0..100 {
        let st = hal.i2c_transfer(bus, a, &[adc::REG_CONFIG], 2)?;
        if st[0] & 0x80 != 0 {
            let r = hal.i2c_transfer(bus, a, &[adc::REG_CONVERSION], 2)?;
            return Ok(i16::from_be_bytes([r[0], r[1]]));
        }
        d.delay_ns(1_000_000).await;
    }
    Err(HalError::Busy)
}

/// Routes `channel` through `mux` and waits for it to settle.
pub async fn select_and_settle(
    hal: &Hal,
    d: &dyn Delay,
    mux: MuxId,
    channel: u8,
) -> Result<(), HalError> {
    if hal.mux_select(mux, channel)? {
        d.delay_ns(super::world::MUX_SETTLE_NS).await;
    }
    Ok(())
}

/// Select + convert + scale to volts.
pub async fn acquire_volts(
    hal: &Hal,
    d: &dyn Delay,
    mux: MuxId,
    channel: u8,
) -> Result<f64, HalError> {
    select_and_settle(hal, d, mux, channel).await?;
    let raw = adc_read(hal, d, mux.rtu, mux.index).await?;
    Ok(adc::raw_to_volts(raw))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuReading {
    pub accel_mps2: [f64; 3],
    pub mag_ut: [f64; 3],
    pub gyro_dps: [f64; 3],
}

pub fn imu_set_mode(hal: &Hal, mode: u8) -> Result<(), HalError> {
    hal.i2c_transfer(BusId::I2C1, addr::IMU, &[imu_reg::OPR_MODE, mode], 0)?;
    Ok(())
}

pub fn imu_trigger(hal: &Hal, bits: u8) -> Result<(), HalError> {
    hal.i2c_transfer(BusId::I2C1, addr::IMU, &[imu_reg::SYS_TRIGGER, bits], 0)?;
    Ok(())
}

pub fn imu_status(hal: &Hal) -> Result<(u8, u8), HalError> {
    let m = hal.i2c_transfer(BusId::I2C1, addr::IMU, &[imu_reg::OPR_MODE], 1)?;
    let c = hal.i2c_transfer(BusId::I2C1, addr::IMU, &[imu_reg::CALIB_STAT], 1)?;
    Ok((m[0], c[0]))
}

/// Burst-reads the three vector blocks.
pub fn imu_read(hal: &Hal) -> Result<ImuReading, HalError> {
    let b = hal.i2c_transfer(BusId::I2C1, addr::IMU, &[imu_reg::ACC_DATA], 18)?;
    let v = |i: usize| i16::from_le_bytes([b[2 * i], b[2 * i + 1]]) as f64;
    Ok(ImuReading {
        accel_mps2: [0, 1, 2].map(|i| v(i) / imu_reg::ACC_SCALE),
        mag_ut: [3, 4, 5].map(|i| v(i) / imu_reg::MAG_SCALE),
        gyro_dps: [6, 7, 8].map(|i| v(i) / imu_reg::GYR_SCALE),
    })
}

/// Pressure (mbar) and temperature (°C) from one barometer.
pub fn baro_read(hal: &Hal, baro_addr: u8) -> Result<(f64, f64), HalError> {
    let b = hal.i2c_transfer(BusId::I2C3, baro_addr, &[baro_reg::PRESSURE], 5)?;
    let p = u32::from_be_bytes([0, b[0], b[1], b[2]]) as f64 / 100.0;
    let t = i16::from_be_bytes([b[3], b[4]]) as f64 / 100.0;
    Ok((p, t))
}

pub fn power_monitor_init(hal: &Hal) -> Result<(), HalError> {
    let c = ina_reg::CALIBRATION_VALUE.to_be_bytes();
    hal.i2c_transfer(
        BusId::I2C2,
        addr::INA226,
        &[ina_reg::CALIBRATION, c[0], c[1]],
        0,
    )?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerReading {
    pub bus_voltage_v: f64,
    pub current_a: f64,
    pub power_w: f64,
}

pub fn power_monitor_read(hal: &Hal) -> Result<PowerReading, HalError> {
    let word = |reg| -> Result<u16, HalError> {
        let b = hal.i2c_transfer(BusId::I2C2, addr::INA226, &[reg], 2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    };
    let bus = word(ina_reg::BUS)?;
    let cur = word(ina_reg::CURRENT)? as i16;
    let pwr = word(ina_reg::POWER)?;
    Ok(PowerReading {
        bus_voltage_v: bus as f64 * ina_reg::BUS_LSB_V,
        current_a: cur as f64 * ina_reg::CURRENT_LSB_A,
        power_w: pwr as f64 * ina_reg::POWER_LSB_W,
    })
}

pub fn board_temp_read(hal: &Hal) -> Result<f64, HalError> {
    let b = hal.i2c_transfer(BusId::I2C2, addr::TC74, &[0x00], 1)?;
    Ok(b[0] as i8 as f64)
}
