use async_trait::async_trait;

use super::log::{f, t_s};
use super::{SubsystemEnv, TelemetryLog};
use crate::domain::state::{HEATER_COUNT, PLATE_COUNT};
use crate::domain::{ControlAuthority, HeaterConfig, OperatingMode};
use crate::executor::{TaskBody, TaskCtx};
use crate::halsim::adc::DataRate;
use crate::halsim::pt1000::pt1000_temperature;
use crate::halsim::{drivers, HalError, MuxId, Rtu, PLATES_PER_ZONE};
use crate::time::Delay;

const ZONES: usize = HEATER_COUNT;

pub(crate) fn header() -> Vec<&'static str> {
    const PLATES: [&str; PLATE_COUNT] = [
        "plate0", "plate1", "plate2", "plate3", "plate4", "plate5", "plate6", "plate7", "plate8",
        "plate9", "plate10", "plate11", "plate12", "plate13", "plate14", "plate15", "plate16",
        "plate17", "plate18", "plate19", "plate20", "plate21", "plate22", "plate23", "plate24",
        "plate25", "plate26", "plate27",
    ];
    let mut h = vec!["t_s", "mode", "authority", "stale"];
    h.extend(PLATES);
    h.extend(["duty0", "duty1", "duty2", "duty3"]);
    h
}

/// Heater duties for one cycle.
///
/// Under autonomous authority each zone runs an on/off controller with a
/// band of ±`hysteresis_c` around the mode's setpoint, delivering the mode's
/// duty cap while on; `gated` holds every heater off. Under manual authority
/// the operator's duties apply, clamped to the same cap.
pub fn htl_control(
    zone_c: &[f64; ZONES],
    heating: &mut [bool; ZONES],
    mode: OperatingMode,
    authority: ControlAuthority,
    manual_pct: &[f64; ZONES],
    gated: bool,
    cfg: &HeaterConfig,
) -> [f64; ZONES] {
    let cap = cfg.duty_limit(mode);
    let sp = cfg.setpoint(mode);
    let h = cfg.hysteresis_c;
    let mut duty = [0.0; ZONES];
    for z in 0..ZONES {
        let t = zone_c[z];
        if t.is_finite() {
            if t < sp - h {
                heating[z] = true;
            } else if t > sp + h {
                heating[z] = false;
            }
        }
        duty[z] = match authority {
            ControlAuthority::Autonomous if heating[z] && !gated => cap,
            ControlAuthority::Autonomous => 0.0,
            ControlAuthority::Manual => manual_pct[z].clamp(0.0, cap),
        };
    }
    duty
}

/// Thermal control: scans the 28 plate thermistors and drives the four
/// heater PWM channels.
pub struct HtlManager {
    env: SubsystemEnv,
    log: Option<TelemetryLog>,
    heating: [bool; ZONES],
    duty: [f64; ZONES],
}

impl HtlManager {
    pub fn new(env: SubsystemEnv) -> Self {
        Self {
            env,
            log: None,
            heating: [false; ZONES],
            duty: [0.0; ZONES],
        }
    }

    pub fn with_log(mut self, log: TelemetryLog) -> Self {
        self.log = Some(log);
        self
    }

    /// Channel-major so the shared select lines move once per channel.
    async fn scan(&self, d: &dyn Delay) -> Result<Vec<f64>, HalError> {
        let hal = &self.env.hal;
        drivers::adc_configure(hal, Rtu::Tmu, DataRate::Sps8)?;
        let mut plates = vec![f64::NAN; PLATE_COUNT];
        for ch in 0..PLATES_PER_ZONE as u8 {
            for m in 0..ZONES as u8 {
                let v = drivers::acquire_volts(hal, d, MuxId::new(Rtu::Tmu, m), ch).await?;
                plates[m as usize * PLATES_PER_ZONE + ch as usize] =
                    pt1000_temperature(v).unwrap_or(f64::NAN);
            }
        }
        Ok(plates)
    }

    fn actuate(&self, duty: &[f64; ZONES]) {
        let hal = &self.env.hal;
        for bank in 0..2 {
            let on = duty[2 * bank] > 0.0 || duty[2 * bank + 1] > 0.0;
            let _ = hal.set_heater_bank(bank, on);
        }
        for (ch, d) in duty.iter().enumerate() {
            let _ = hal.pwm_set(ch, *d);
        }
    }
}

fn zone_means(plates: &[f64]) -> [f64; ZONES] {
    let mut z = [f64::NAN; ZONES];
    for (i, chunk) in plates.chunks(PLATES_PER_ZONE).enumerate().take(ZONES) {
        let valid: Vec<f64> = chunk.iter().copied().filter(|t| t.is_finite()).collect();
        if !valid.is_empty() {
            z[i] = valid.iter().sum::<f64>() / valid.len() as f64;
        }
    }
    z
}

#[async_trait(?Send)]
impl TaskBody for HtlManager {
    async fn run(&mut self, ctx: &TaskCtx) {
        let caller = ctx.caller();
        let pool = &self.env.pool;
        let cfg = &self.env.cfg;
        let mode = pool.htl_mode.get(&caller);
        let ctrl = pool.htl_ctrlr.get(&caller);
        let pressure = pool.el.read_with(&caller, |e| e.pressure_mbar());
        let scan = self.scan(ctx).await;
        // no autonomous heating on the ground or without an ambient reading
        let gated = pressure.is_none_or(|p| p > cfg.ascent1_mbar);
        let duty = match &scan {
            Ok(plates) => htl_control(
                &zone_means(plates),
                &mut self.heating,
                mode,
                ctrl.authority,
                &ctrl.manual_duty_pct,
                gated,
                &cfg.heater,
            ),
            Err(_) => {
                let cap = cfg.heater.duty_limit(mode);
                self.duty.map(|d| d.min(cap))
            }
        };
        self.duty = duty;
        self.actuate(&duty);
        let setpoint = cfg.heater.setpoint(mode);
        let state = pool.htl.update(&caller, |s| {
            match &scan {
                Ok(plates) => {
                    s.plate_c.clone_from(plates);
                    s.stale = false;
                }
                Err(_) => {
                    s.stale = true;
                    s.adc_errors += 1;
                }
            }
            s.duty_pct = duty;
            s.setpoint_c = setpoint;
            s.authority = ctrl.authority;
            s.scans += 1;
            s.clone()
        });
        if let Some(log) = &mut self.log {
            let mut row = vec![
                t_s(ctx.now_ms()),
                mode.to_string(),
                format!("{:?}", state.authority),
                (state.stale as u8).to_string(),
            ];
            row.extend(state.plate_c.iter().map(|t| f(*t)));
            row.extend(state.duty_pct.iter().map(|d| f(*d)));
            log.row(row);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testkit::*;
    use super::*;
    use crate::datapool::Caller;
    use crate::domain::names::HTL_MANAGER;
    use crate::time::block_on;

    fn auto(t: f64, mode: OperatingMode, heating: &mut [bool; 4]) -> [f64; 4] {
        htl_control(
            &[t; 4],
            heating,
            mode,
            ControlAuthority::Autonomous,
            &[0.0; 4],
            false,
            &HeaterConfig::default(),
        )
    }

    #[test]
    fn low_side_of_the_band_gives_the_cap() {
        let cfg = HeaterConfig::default();
        let t = cfg.setpoint(OperatingMode::Float1) - 2.0 * cfg.hysteresis_c;
        assert_eq!(auto(t, OperatingMode::Float1, &mut [false; 4]), [60.0; 4]);
    }

    #[test]
    fn band_keeps_state_until_the_high_side() {
        let mut h = [false; 4];
        assert_eq!(auto(19.0, OperatingMode::Float2, &mut h), [100.0; 4]);
        assert_eq!(
            auto(20.3, OperatingMode::Float2, &mut h),
            [100.0; 4],
            "inside the band: still on"
        );
        assert_eq!(auto(20.6, OperatingMode::Float2, &mut h), [0.0; 4]);
        assert_eq!(
            auto(19.7, OperatingMode::Float2, &mut h),
            [0.0; 4],
            "inside the band: still off"
        );
    }

    #[test]
    fn float_caps_differ() {
        let f1 = auto(15.0, OperatingMode::Float1, &mut [false; 4]);
        let f2 = auto(15.0, OperatingMode::Float2, &mut [false; 4]);
        assert_eq!((f1[0], f2[0]), (60.0, 100.0));
    }

    #[test]
    fn descent_and_shutdown_force_zero() {
        for mode in [OperatingMode::Descent, OperatingMode::Shutdown] {
            assert_eq!(auto(-40.0, mode, &mut [true; 4]), [0.0; 4]);
            let man = htl_control(
                &[0.0; 4],
                &mut [false; 4],
                mode,
                ControlAuthority::Manual,
                &[80.0; 4],
                false,
                &HeaterConfig::default(),
            );
            assert_eq!(man, [0.0; 4]);
        }
    }

    #[test]
    fn manual_duty_is_clamped_to_the_cap() {
        let d = htl_control(
            &[50.0; 4],
            &mut [false; 4],
            OperatingMode::Ascent1,
            ControlAuthority::Manual,
            &[10.0, 45.0, -5.0, 100.0],
            true,
            &HeaterConfig::default(),
        );
        assert_eq!(d, [10.0, 30.0, 0.0, 30.0]);
    }

    #[test]
    fn gating_holds_autonomous_heaters_off() {
        let d = htl_control(
            &[0.0; 4],
            &mut [false; 4],
            OperatingMode::Float1,
            ControlAuthority::Autonomous,
            &[0.0; 4],
            true,
            &HeaterConfig::default(),
        );
        assert_eq!(d, [0.0; 4]);
    }

    #[test]
    fn full_cycle_scans_and_heats() {
        let (env, clock) = env_at(20.0);
        power_all(&env);
        let sys = Caller::system();
        env.pool.htl_mode.write(&sys, OperatingMode::Float1);
        env.pool
            .el
            .update(&sys, |e| e.abs_pressure_mbar = [20.0, 20.0]);
        let ctx = ctx(HTL_MANAGER, &clock);
        let mut htl = HtlManager::new(env.clone());
        block_on(htl.run(&ctx));
        let s = env.pool.htl.get(&sys);
        assert!(!s.stale);
        assert_eq!(s.scans, 1);
        assert!(s.plate_c.iter().all(|t| t.is_finite()));
        // chamber ambient at 20 mbar is far below the setpoint
        let truth = env.hal.world().plate_temp_c(0, 0);
        assert!(
            (s.plate_c[0] - truth).abs() < 0.5,
            "{} vs {truth}",
            s.plate_c[0]
        );
        assert_eq!(s.duty_pct, [60.0; 4]);
        assert_eq!(env.hal.pwm_duty(), [60.0; 4]);
        // 28 conversions at 8 SPS
        assert!(clock.now_ms() >= 28 * 125, "{}", clock.now_ms());
        assert!(clock.now_ms() < 10_000);
    }

    #[test]
    fn adc_failure_holds_duty_and_flags() {
        let (env, clock) = env_at(20.0);
        power_all(&env);
        let sys = Caller::system();
        env.pool.htl_mode.write(&sys, OperatingMode::Float1);
        env.pool
            .el
            .update(&sys, |e| e.abs_pressure_mbar = [20.0, 20.0]);
        let ctx = ctx(HTL_MANAGER, &clock);
        let mut htl = HtlManager::new(env.clone());
        block_on(htl.run(&ctx));
        env.hal.set_power(0, false).unwrap();
        block_on(htl.run(&ctx));
        let s = env.pool.htl.get(&sys);
        assert!(s.stale);
        assert_eq!(s.adc_errors, 1);
        assert_eq!(s.duty_pct, [60.0; 4]);
    }
}
