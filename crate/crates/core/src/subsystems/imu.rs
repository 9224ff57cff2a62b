use async_trait::async_trait;

use super::log::{f, t_s};
use super::{SubsystemEnv, TelemetryLog};
use crate::domain::OperatingMode;
use crate::executor::{TaskBody, TaskCtx};
use crate::halsim::devices::{imu_reg, IMU_BOOT_NS};
use crate::halsim::{drivers, HalError};
use crate::time::Delay;

pub(crate) const HEADER: &[&str] = &[
    "t_s", "ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz", "calib", "stale",
];

/// 100 Hz inertial sampling into DP-NADS.
pub struct ImuMeasurer {
    env: SubsystemEnv,
    log: Option<TelemetryLog>,
    configured: bool,
    seen_calibrate: u32,
    seen_restart: u32,
    boot_until_ns: u64,
}

impl ImuMeasurer {
    pub fn new(env: SubsystemEnv) -> Self {
        Self {
            env,
            log: None,
            configured: false,
            seen_calibrate: 0,
            seen_restart: 0,
            boot_until_ns: 0,
        }
    }

    pub fn with_log(mut self, log: TelemetryLog) -> Self {
        self.log = Some(log);
        self
    }

    /// Applies pending operator commands; returns false while the IMU boots.
    fn service_commands(&mut self, ctx: &TaskCtx) -> Result<bool, HalError> {
        let hal = &self.env.hal;
        let dev = self.env.pool.nads_dev.get(&ctx.caller());
        if dev.restart_requests != self.seen_restart {
            self.seen_restart = dev.restart_requests;
            drivers::imu_trigger(hal, imu_reg::TRIGGER_RESTART)?;
            self.configured = false;
            self.boot_until_ns = ctx.now_ns() + IMU_BOOT_NS;
        }
        if ctx.now_ns() < self.boot_until_ns {
            return Ok(false);
        }
        if !self.configured {
            drivers::imu_set_mode(hal, imu_reg::MODE_NDOF)?;
            self.configured = true;
        }
        if dev.calibrate_requests != self.seen_calibrate {
            self.seen_calibrate = dev.calibrate_requests;
            drivers::imu_trigger(hal, imu_reg::TRIGGER_CALIBRATE)?;
        }
        Ok(true)
    }

    fn acquire(&mut self, ctx: &TaskCtx) -> Result<Option<(drivers::ImuReading, u8)>, HalError> {
        if !self.service_commands(ctx)? {
            return Ok(None);
        }
        let (mode, calib) = drivers::imu_status(&self.env.hal)?;
        if mode != imu_reg::MODE_NDOF {
            // lost its configuration through a power cycle
            self.configured = false;
            drivers::imu_set_mode(&self.env.hal, imu_reg::MODE_NDOF)?;
            self.configured = true;
        }
        Ok(Some((drivers::imu_read(&self.env.hal)?, calib)))
    }
}

#[async_trait(?Send)]
impl TaskBody for ImuMeasurer {
    async fn run(&mut self, ctx: &TaskCtx) {
        let caller = ctx.caller();
        let pool = self.env.pool.clone();
        if pool.nads_mode.get(&caller) == OperatingMode::Shutdown {
            return;
        }
        let result = self.acquire(ctx);
        let state = pool.nads.update(&caller, |s| {
            match &result {
                Ok(Some((r, calib))) => {
                    s.accel_mps2 = r.accel_mps2;
                    s.gyro_dps = r.gyro_dps;
                    s.mag_ut = r.mag_ut;
                    s.imu_calib = *calib;
                    s.imu_stale = false;
                    s.imu_samples += 1;
                }
                Ok(None) => s.imu_stale = true,
                Err(_) => {
                    s.imu_stale = true;
                    s.imu_errors += 1;
                }
            }
            s.clone()
        });
        if result.is_err() {
            self.configured = false;
        }
        if let Some(log) = &mut self.log {
            let mut row = vec![t_s(ctx.now_ms())];
            for v in state
                .accel_mps2
                .iter()
                .chain(&state.gyro_dps)
                .chain(&state.mag_ut)
            {
                row.push(f(*v));
            }
            row.push(state.imu_calib.to_string());
            row.push((state.imu_stale as u8).to_string());
            log.row(row);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testkit::*;
    use super::*;
    use crate::domain::names::IMU_MEASURER;
    use crate::time::{block_on, NS_PER_MS};

    fn cycles(body: &mut ImuMeasurer, ctx: &TaskCtx, n: u64) {
        for _ in 0..n {
            block_on(body.run(ctx));
            ctx.clock().advance_by(10 * NS_PER_MS);
        }
    }

    #[test]
    fn one_second_gives_a_hundred_samples() {
        let (env, clock) = env_at(954.0);
        power_all(&env);
        let ctx = ctx(IMU_MEASURER, &clock);
        let mut imu = ImuMeasurer::new(env.clone());
        cycles(&mut imu, &ctx, 100);
        let s = env.pool.nads.read(&crate::datapool::Caller::system());
        assert_eq!(s.value.imu_samples, 100);
        assert_eq!(s.write_count, 100);
        assert!((s.value.accel_mps2[2] - 9.80665).abs() < 0.1);
        assert!(!s.value.imu_stale);
    }

    #[test]
    fn shutdown_skips_acquisition() {
        let (env, clock) = env_at(954.0);
        power_all(&env);
        env.pool
            .nads_mode
            .write(&crate::datapool::Caller::system(), OperatingMode::Shutdown);
        let ctx = ctx(IMU_MEASURER, &clock);
        let mut imu = ImuMeasurer::new(env.clone());
        cycles(&mut imu, &ctx, 50);
        assert_eq!(
            env.pool
                .nads
                .read(&crate::datapool::Caller::system())
                .write_count,
            0
        );
    }

    #[test]
    fn unpowered_imu_counts_one_error_per_cycle() {
        let (env, clock) = env_at(954.0);
        let ctx = ctx(IMU_MEASURER, &clock);
        let mut imu = ImuMeasurer::new(env.clone());
        cycles(&mut imu, &ctx, 7);
        let s = env.pool.nads.get(&crate::datapool::Caller::system());
        assert!(s.imu_stale);
        assert_eq!(s.imu_errors, 7);
        assert_eq!(s.imu_samples, 0);
    }

    #[test]
    fn recovers_after_power_cycle() {
        let (env, clock) = env_at(954.0);
        power_all(&env);
        let ctx = ctx(IMU_MEASURER, &clock);
        let mut imu = ImuMeasurer::new(env.clone());
        cycles(&mut imu, &ctx, 5);
        env.hal.set_power(2, false).unwrap();
        cycles(&mut imu, &ctx, 3);
        env.hal.set_power(2, true).unwrap();
        cycles(&mut imu, &ctx, 5);
        let s = env.pool.nads.get(&crate::datapool::Caller::system());
        assert_eq!(s.imu_errors, 3);
        assert_eq!(s.imu_samples, 10);
        assert!(s.accel_mps2[2] > 9.0, "reconfigured to fusion mode");
    }

    #[test]
    fn calibrate_and_restart_requests() {
        let (env, clock) = env_at(954.0);
        power_all(&env);
        let ctx = ctx(IMU_MEASURER, &clock);
        let mut imu = ImuMeasurer::new(env.clone());
        let sys = crate::datapool::Caller::system();
        env.pool
            .nads_dev
            .update(&sys, |d| d.calibrate_requests += 1);
        cycles(&mut imu, &ctx, 120);
        assert_eq!(env.pool.nads.get(&sys).imu_calib, 0xFF);
        env.pool.nads_dev.update(&sys, |d| d.restart_requests += 1);
        cycles(&mut imu, &ctx, 10);
        assert!(env.pool.nads.get(&sys).imu_stale, "booting");
        cycles(&mut imu, &ctx, 70);
        let s = env.pool.nads.get(&sys);
        assert!(!s.imu_stale);
        assert_eq!(s.imu_calib, 0, "restart clears calibration");
        assert_eq!(s.imu_errors, 0);
    }
}
