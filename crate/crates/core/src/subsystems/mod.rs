//! The five application task bodies: each one measures through the HAL,
//! decides, actuates, and publishes into the data pool.

mod gps;
mod htl;
mod imu;
mod log;
pub mod nmea;
mod pcu;
mod sdpu;

use std::path::Path;
use std::sync::Arc;

pub use gps::GpsMeasurer;
pub use htl::{htl_control, HtlManager};
pub use imu::ImuMeasurer;
pub use log::TelemetryLog;
pub use pcu::{apply_power_policy, desired_switches, switch_policy, PcuManager};
pub use sdpu::{detector_step, ls_slope, SdpuMeasurer};

use crate::datapool::DataPool;
use crate::domain::MissionConfig;
use crate::halsim::Hal;

/// What every subsystem body reaches: the hardware, the pool and the
/// mission tunables.
#[derive(Debug, Clone)]
pub struct SubsystemEnv {
    pub hal: Arc<Hal>,
    pub pool: Arc<DataPool>,
    pub cfg: Arc<MissionConfig>,
}

impl SubsystemEnv {
    pub fn new(hal: Arc<Hal>, pool: Arc<DataPool>, cfg: Arc<MissionConfig>) -> Self {
        Self { hal, pool, cfg }
    }
}

/// The five bodies, optionally logging into `log_dir`.
pub struct Bodies {
    pub imu: ImuMeasurer,
    pub gps: GpsMeasurer,
    pub htl: HtlManager,
    pub sdpu: SdpuMeasurer,
    pub pcu: PcuManager,
}

impl Bodies {
    /// `nads_log` controls the 100 Hz NADS file, which dominates disk use
    /// on long runs.
    pub fn new(
        env: &SubsystemEnv,
        log_dir: Option<&Path>,
        nads_log: bool,
    ) -> std::io::Result<Self> {
        let open = |name: &str, header: &[&str]| -> std::io::Result<Option<TelemetryLog>> {
            log_dir
                .map(|d| TelemetryLog::create(d.join(name), header))
                .transpose()
        };
        let mut imu = ImuMeasurer::new(env.clone());
        if nads_log {
            if let Some(l) = open("nads.csv", imu::HEADER)? {
                imu = imu.with_log(l);
            }
        }
        let mut htl = HtlManager::new(env.clone());
        if let Some(l) = open("htl.csv", &htl::header())? {
            htl = htl.with_log(l);
        }
        let mut sdpu = SdpuMeasurer::new(env.clone());
        if let (Some(el), Some(atl)) = (
            open("el.csv", sdpu::EL_HEADER)?,
            open("atl.csv", sdpu::ATL_HEADER)?,
        ) {
            sdpu = sdpu.with_logs(el, atl);
        }
        let mut pcu = PcuManager::new(env.clone());
        if let Some(l) = open("pcu.csv", pcu::HEADER)? {
            pcu = pcu.with_log(l);
        }
        Ok(Self {
            imu,
            gps: GpsMeasurer::new(env.clone()),
            htl,
            sdpu,
            pcu,
        })
    }
}
