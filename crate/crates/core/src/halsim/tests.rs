use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use super::adc::{self, DataRate};
use super::devices::{baro_reg, imu_reg};
use super::drivers::*;
use super::topology::addr;
use super::*;
use crate::envsim::{make_stationary_profile, REFERENCE_LAT, REFERENCE_LON};
use crate::time::{block_on, SimClock};

fn hal_with(noise: f64) -> Hal {
    let profile = make_stationary_profile(954.0, REFERENCE_LAT, REFERENCE_LON, 1e6).unwrap();
    Hal::new(
        SimClock::new_virtual(),
        profile,
        HalConfig {
            barometer_noise_mbar: noise,
            tx_log_cap: Some(100_000),
            ..HalConfig::default()
        },
    )
}

fn bench_hal() -> Hal {
    let hal = hal_with(0.0);
    hal.set_power(0, true).unwrap();
    hal.set_power(1, true).unwrap();
    adc_configure(&hal, Rtu::Tmu, DataRate::Sps8).unwrap();
    adc_configure(&hal, Rtu::Sdpu, DataRate::Sps128).unwrap();
    hal
}

#[test]
fn barometer_reads_ground_pressure() {
    let hal = hal_with(0.05);
    let (p, _) = baro_read(&hal, addr::BARO_A).unwrap();
    assert!((p - 954.0).abs() < 0.25, "{p}");
}

#[test]
fn barometer_config_register_echoes() {
    let hal = hal_with(0.0);
    hal.i2c_transfer(BusId::I2C3, addr::BARO_B, &[baro_reg::CONFIG, 0x5A], 0)
        .unwrap();
    let r = hal
        .i2c_transfer(BusId::I2C3, addr::BARO_B, &[baro_reg::CONFIG], 1)
        .unwrap();
    assert_eq!(r, vec![0x5A]);
}

#[test]
fn unpowered_rtu_nacks() {
    let hal = hal_with(0.0);
    let e = hal
        .i2c_transfer(BusId::I2C1, addr::IMU, &[imu_reg::CHIP_ID], 1)
        .unwrap_err();
    assert!(e.is_nack());
    let e = hal
        .i2c_transfer(BusId::I2C4, addr::ADC, &[adc::REG_CONFIG], 2)
        .unwrap_err();
    assert!(matches!(e, HalError::PoweredOff { .. }));
    let e = hal.i2c_transfer(BusId::I2C2, 0x11, &[0], 1).unwrap_err();
    assert!(matches!(e, HalError::Nack { .. }));
}

#[test]
fn every_device_behind_an_open_switch_nacks() {
    let hal = hal_with(0.0);
    for p in hal.topology().placements.clone() {
        let r = hal.i2c_transfer(p.bus, p.addr, &[0x00], 1);
        if p.domain == PowerDomain::Obc {
            assert!(r.is_ok(), "{}", p.device);
        } else {
            assert!(r.unwrap_err().is_nack(), "{}", p.device);
        }
    }
}

#[test]
fn adc_zero_and_saturation() {
    let hal = bench_hal();
    let mux = MuxId::new(Rtu::Tmu, 0);
    hal.load_testbench_pass(Rtu::Tmu, BTreeMap::from([((0, 0), 0.0), ((0, 1), 4.096)]));
    let d = hal.clock().clone();
    assert_eq!(
        block_on(async {
            select_and_settle(&hal, &d, mux, 0).await.unwrap();
            adc_read(&hal, &d, Rtu::Tmu, 0).await
        })
        .unwrap(),
        0
    );
    assert_eq!(
        block_on(async {
            select_and_settle(&hal, &d, mux, 1).await.unwrap();
            adc_read(&hal, &d, Rtu::Tmu, 0).await
        })
        .unwrap(),
        32767
    );
}

#[test]
fn adc_reference_channel_raw() {
    let hal = bench_hal();
    hal.load_testbench_pass(Rtu::Tmu, BTreeMap::from([((0, 0), 2.3559)]));
    let d = hal.clock().clone();
    let raw = block_on(adc_read(&hal, &d, Rtu::Tmu, 0)).unwrap();
    assert_eq!(raw, (2.3559f64 / 4.096 * 32768.0).round() as i16);
}

#[test]
fn unconfigured_adc_rejected() {
    let hal = hal_with(0.0);
    hal.set_power(0, true).unwrap();
    let d = hal.clock().clone();
    assert_eq!(
        block_on(adc_read(&hal, &d, Rtu::Tmu, 0)),
        Err(HalError::Unconfigured)
    );
}

#[test]
fn eight_conversions_take_a_second() {
    let hal = bench_hal();
    let d = hal.clock().clone();
    let t0 = d.now_ns();
    for _ in 0..8 {
        block_on(adc_read(&hal, &d, Rtu::Tmu, 0)).unwrap();
    }
    assert!(d.now_ns() - t0 >= 1_000_000_000);
}

#[test]
fn conversion_result_unavailable_before_latency() {
    let hal = bench_hal();
    hal.load_testbench_pass(Rtu::Tmu, BTreeMap::from([((0, 0), 1.0)]));
    let w = adc::config_word(0, DataRate::Sps8, true).to_be_bytes();
    hal.i2c_transfer(BusId::I2C4, addr::ADC, &[adc::REG_CONFIG, w[0], w[1]], 0)
        .unwrap();
    let st = hal
        .i2c_transfer(BusId::I2C4, addr::ADC, &[adc::REG_CONFIG], 2)
        .unwrap();
    assert_eq!(st[0] & 0x80, 0, "converting");
    hal.clock().advance_by(124_000_000);
    let r = hal
        .i2c_transfer(BusId::I2C4, addr::ADC, &[adc::REG_CONVERSION], 2)
        .unwrap();
    assert_eq!(i16::from_be_bytes([r[0], r[1]]), 0);
    hal.clock().advance_by(1_000_000);
    let r = hal
        .i2c_transfer(BusId::I2C4, addr::ADC, &[adc::REG_CONVERSION], 2)
        .unwrap();
    assert_eq!(i16::from_be_bytes([r[0], r[1]]), 8000);
}

#[test]
fn mux_select_routes_channel() {
    let hal = bench_hal();
    let fixture: BTreeMap<_, _> = (0..8)
        .map(|c| ((1u8, c as u8), 0.5 + 0.25 * c as f64))
        .collect();
    hal.load_testbench_pass(Rtu::Sdpu, fixture);
    let d = hal.clock().clone();
    let v = block_on(acquire_volts(&hal, &d, MuxId::new(Rtu::Sdpu, 1), 5)).unwrap();
    assert!((v - 1.75).abs() <= adc::LSB_V);
    assert!(
        !hal.mux_select(MuxId::new(Rtu::Sdpu, 1), 5).unwrap(),
        "idempotent"
    );
    assert!(matches!(
        hal.mux_select(MuxId::new(Rtu::Sdpu, 1), 8),
        Err(HalError::Range(_))
    ));
    assert!(hal.mux_select(MuxId::new(Rtu::Sdpu, 2), 0).is_err());
}

#[test]
fn unsettled_conversion_samples_previous_channel() {
    let hal = bench_hal();
    hal.load_testbench_pass(Rtu::Tmu, BTreeMap::from([((0, 0), 1.0), ((0, 3), 2.0)]));
    let d = hal.clock().clone();
    hal.clock().advance_by(10_000_000);
    hal.mux_select(MuxId::new(Rtu::Tmu, 0), 3).unwrap();
    let raw = block_on(adc_read(&hal, &d, Rtu::Tmu, 0)).unwrap();
    assert_eq!(raw, adc::volts_to_raw(1.0));
}

#[test]
fn empty_fixture_reads_zero() {
    let hal = bench_hal();
    hal.load_testbench(Rtu::Sdpu, &TestBenchFixture::default());
    let d = hal.clock().clone();
    for ch in 0..8 {
        let v = block_on(acquire_volts(&hal, &d, MuxId::new(Rtu::Sdpu, 0), ch)).unwrap();
        assert_eq!(v, 0.0);
    }
}

/// Independent checksum: fold over the raw sentence bytes between the
/// delimiters.
fn checksum_ok(sentence: &str) -> bool {
    let bytes = sentence.as_bytes();
    let Some(star) = bytes.iter().rposition(|&b| b == b'*') else {
        return false;
    };
    let mut x = 0u8;
    for &b in &bytes[1..star] {
        x ^= b;
    }
    let hex = std::str::from_utf8(&bytes[star + 1..star + 3]).unwrap();
    u8::from_str_radix(hex, 16) == Ok(x)
}

#[test]
fn gps_stream_at_five_hertz() {
    let hal = hal_with(0.0);
    hal.set_power(2, true).unwrap();
    hal.uart_open(0, gps::GPS_BAUD).unwrap();
    assert!(
        hal.uart_read(0, 4096).unwrap().is_empty(),
        "nothing yet at t=0"
    );
    hal.clock().advance_to(1_000_000_000);
    let text = String::from_utf8(hal.uart_read(0, 1 << 16).unwrap()).unwrap();
    let lines: Vec<&str> = text.split_inclusive("\r\n").collect();
    assert_eq!(lines.iter().filter(|l| l.starts_with("$GPGGA")).count(), 5);
    assert_eq!(lines.iter().filter(|l| l.starts_with("$GPRMC")).count(), 5);
    for l in lines {
        assert!(l.ends_with("\r\n"));
        assert!(checksum_ok(l.trim_end()), "{l}");
    }
}

#[test]
fn gps_bytes_paced_by_baud_rate() {
    let hal = hal_with(0.0);
    hal.set_power(2, true).unwrap();
    hal.uart_open(0, gps::GPS_BAUD).unwrap();
    // 1 ms after the first epoch: about 11.5 characters at 115200 baud
    hal.clock().advance_to(gps::GPS_PHASE_NS + 1_000_000);
    let n = hal.uart_read(0, 4096).unwrap().len();
    assert!((11..=13).contains(&n), "{n}");
}

#[test]
fn closed_uart_errors() {
    let hal = hal_with(0.0);
    assert_eq!(hal.uart_read(0, 10), Err(HalError::PortClosed(0)));
}

#[test]
fn imu_modes_calibration_and_restart() {
    let hal = hal_with(0.0);
    hal.set_power(2, true).unwrap();
    let id = hal
        .i2c_transfer(BusId::I2C1, addr::IMU, &[imu_reg::CHIP_ID], 1)
        .unwrap();
    assert_eq!(id, vec![imu_reg::CHIP_ID_VALUE]);
    // config mode reports zeros
    assert_eq!(imu_read(&hal).unwrap().accel_mps2, [0.0; 3]);
    imu_set_mode(&hal, imu_reg::MODE_NDOF).unwrap();
    hal.clock().advance_by(10_000_000);
    let r = imu_read(&hal).unwrap();
    assert!((r.accel_mps2[2] - 9.81).abs() < 0.2, "{r:?}");

    imu_trigger(&hal, imu_reg::TRIGGER_CALIBRATE).unwrap();
    assert_eq!(imu_status(&hal).unwrap().1, 0);
    hal.clock().advance_by(1_000_000_000);
    assert_eq!(imu_status(&hal).unwrap().1, 0xFF);

    imu_trigger(&hal, imu_reg::TRIGGER_RESTART).unwrap();
    assert_eq!(imu_read(&hal), Err(HalError::Busy));
    hal.clock().advance_by(devices::IMU_BOOT_NS);
    assert_eq!(imu_status(&hal).unwrap(), (imu_reg::MODE_CONFIG, 0));
}

#[test]
fn power_monitor_consistent() {
    let hal = hal_with(0.0);
    for s in 0..3 {
        hal.set_power(s, true).unwrap();
    }
    power_monitor_init(&hal).unwrap();
    let r = power_monitor_read(&hal).unwrap();
    assert!((r.bus_voltage_v - 28.0).abs() < 0.05, "{r:?}");
    assert!(
        (r.power_w - r.bus_voltage_v * r.current_a).abs() <= 0.01 * r.power_w,
        "{r:?}"
    );
    assert_eq!(board_temp_read(&hal).unwrap(), 20.0);
}

#[test]
fn uncalibrated_power_monitor_reports_no_current() {
    let hal = hal_with(0.0);
    assert_eq!(power_monitor_read(&hal).unwrap().current_a, 0.0);
}

#[test]
fn power_off_resets_adc_configuration() {
    let hal = bench_hal();
    hal.set_power(0, false).unwrap();
    hal.set_power(0, true).unwrap();
    let d = hal.clock().clone();
    assert_eq!(
        block_on(adc_read(&hal, &d, Rtu::Tmu, 0)),
        Err(HalError::Unconfigured)
    );
}

#[test]
fn heater_drive_warms_plates() {
    let hal = bench_hal();
    hal.clear_testbench(Rtu::Tmu);
    hal.set_heater_bank(0, true).unwrap();
    hal.pwm_set(0, 100.0).unwrap();
    hal.clock().advance_by(600_000_000_000);
    let w = hal.world();
    assert!(
        w.plate_temp_c(0, hal.clock().now_ns()) > w.plate_temp_c(21, hal.clock().now_ns()) + 50.0
    );
    assert!(hal.pwm_set(4, 10.0).is_err());
    assert!(hal.pwm_set(0, 120.0).is_err());
}

#[test]
fn bus_transfers_never_interleave() {
    let hal = Arc::new(hal_with(0.05));
    let threads: Vec<_> = (0..4)
        .map(|k| {
            let hal = hal.clone();
            std::thread::spawn(move || {
                let a = if k % 2 == 0 {
                    addr::BARO_A
                } else {
                    addr::BARO_B
                };
                for _ in 0..500 {
                    hal.i2c_transfer(BusId::I2C3, a, &[baro_reg::PRESSURE], 5)
                        .unwrap();
                }
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    let log = hal.take_tx_logs();
    assert_eq!(log.len(), 4000);
    // both legs of a transfer are adjacent and transfer ids strictly increase
    for pair in log.chunks(2) {
        assert_eq!(pair[0].txn, pair[1].txn);
        assert_eq!(pair[0].addr, pair[1].addr);
        assert_eq!((pair[0].dir, pair[1].dir), (Direction::W, Direction::R));
    }
    for w in log.windows(2).step_by(2) {
        let _ = w;
    }
    let ids: Vec<u64> = log.iter().step_by(2).map(|r| r.txn).collect();
    assert!(ids.windows(2).all(|w| w[0] < w[1]));
    let jsonl = log_to_jsonl(&log[..2]);
    assert!(
        jsonl.starts_with("{\"t_ms\":0,\"bus\":3,\"addr\":118,\"dir\":\"w\""),
        "{jsonl}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn acquisition_round_trip_within_one_lsb(v in 0.0f64..4.095, mux in 0u8..4, ch in 0u8..8) {
        let hal = bench_hal();
        hal.load_testbench_pass(Rtu::Tmu, BTreeMap::from([((mux, ch), v)]));
        let d = hal.clock().clone();
        let read = block_on(acquire_volts(&hal, &d, MuxId::new(Rtu::Tmu, mux), ch)).unwrap();
        prop_assert!((read - v).abs() <= adc::LSB_V);
    }
}
