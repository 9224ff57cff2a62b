//! Contents of the data-pool cells.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{ControlAuthority, EventKind, OperatingMode, ValueMap};

pub const PLATE_COUNT: usize = 28;
pub const HEATER_COUNT: usize = 4;
pub const SWITCH_COUNT: usize = 3;

/// A decoded GPS fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub alt_m: f64,
    /// UTC of the fix, ms since the Unix epoch.
    pub utc_ms: i64,
    /// Mission time at which the fix was decoded.
    pub t_ms: u64,
    pub satellites: u8,
}

/// DP-NADS.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NadsState {
    pub accel_mps2: [f64; 3],
    pub gyro_dps: [f64; 3],
    pub mag_ut: [f64; 3],
    pub imu_calib: u8,
    pub imu_stale: bool,
    pub imu_errors: u64,
    pub imu_samples: u64,
    pub fix: Option<GpsFix>,
    /// UTC minus mission time at the first valid fix, ms.
    pub epoch_offset_ms: Option<i64>,
    pub gps_fixes: u64,
    pub gps_parse_errors: u64,
}

/// DP-HTL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HtlState {
    pub plate_c: Vec<f64>,
    pub duty_pct: [f64; HEATER_COUNT],
    pub setpoint_c: f64,
    pub authority: ControlAuthority,
    pub stale: bool,
    pub adc_errors: u64,
    pub scans: u64,
}

impl Default for HtlState {
    fn default() -> Self {
        Self {
            plate_c: vec![f64::NAN; PLATE_COUNT],
            duty_pct: [0.0; HEATER_COUNT],
            setpoint_c: 20.0,
            authority: ControlAuthority::default(),
            stale: true,
            adc_errors: 0,
            scans: 0,
        }
    }
}

/// DP-EL: radiometers and the two absolute barometers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ElState {
    pub radiometer_v: [f64; 6],
    pub abs_pressure_mbar: [f64; 2],
    /// Least-squares pressure slope over the detector window, mbar/s.
    pub pressure_rate_mbar_s: f64,
    pub mode_mirror: OperatingMode,
    pub analog_valid: bool,
    pub baro_errors: u64,
    pub samples: u64,
}

impl ElState {
    /// Mean of the valid absolute barometers, if any.
    pub fn pressure_mbar(&self) -> Option<f64> {
        let v: Vec<f64> = self
            .abs_pressure_mbar
            .iter()
            .copied()
            .filter(|p| p.is_finite() && *p > 0.0)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// DP-ATL: differential pressures and photodiodes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AtlState {
    pub diff_pressure_v: [f64; 4],
    pub photodiode_v: [f64; 4],
    pub mode_mirror: OperatingMode,
    pub analog_valid: bool,
}

/// DP-PCU.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PcuState {
    pub bus_voltage_v: f64,
    pub current_a: f64,
    pub power_w: f64,
    pub board_temp_c: f64,
    pub switches: [bool; SWITCH_COUNT],
    pub stale: bool,
    pub errors: u64,
}

/// TTC-TM-Mode: TM Sender cycles per SC and per HK frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TmMode {
    pub sc_divider: u32,
    pub hk_divider: u32,
}

impl Default for TmMode {
    fn default() -> Self {
        Self {
            sc_divider: 1,
            hk_divider: 10,
        }
    }
}

/// HTL-Ctrlr.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HtlControl {
    pub authority: ControlAuthority,
    /// Operator duties, applied only under manual authority.
    pub manual_duty_pct: [f64; HEATER_COUNT],
}

/// EL-Ctrlr: control state of the passive EL/ATL objects.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ElControl {
    pub mirrored_mode: OperatingMode,
    pub authority: ControlAuthority,
}

/// SDPU-Ctrlr: float/cut-off detector memory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SdpuControl {
    pub below_float_count: usize,
    /// (mission time s, pressure mbar), oldest first.
    pub window: VecDeque<(f64, f64)>,
    /// Mode in which `emitted` was collected; reset on change.
    pub emitted_in: OperatingMode,
    pub emitted: Vec<EventKind>,
    pub event_overflows: u64,
}

/// NADS-Dev: pending IMU commands as monotone request counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NadsDev {
    pub calibrate_requests: u32,
    pub restart_requests: u32,
    pub last_seq: Option<u32>,
}

/// PCU-Dev: operator overrides of the RTU power switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcuDev {
    pub overrides: [Option<bool>; SWITCH_COUNT],
    pub last_seq: Option<u32>,
}

/// HTL-Dev / SDPU-Dev: last device command issued by the operator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceCommand {
    pub seq: u32,
    pub t_ms: u64,
    pub command: String,
    pub args: ValueMap,
}
