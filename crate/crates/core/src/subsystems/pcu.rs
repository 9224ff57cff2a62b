use async_trait::async_trait;

use super::log::{f, t_s};
use super::{SubsystemEnv, TelemetryLog};
use crate::domain::state::{PcuDev, SWITCH_COUNT};
use crate::domain::OperatingMode;
use crate::executor::{TaskBody, TaskCtx};
use crate::halsim::{drivers, Hal, HalError};
use crate::time::Delay;

pub(crate) const HEADER: &[&str] = &[
    "t_s",
    "mode",
    "bus_v",
    "current_a",
    "power_w",
    "board_c",
    "sw_tmu",
    "sw_sdpu",
    "sw_nads",
    "stale",
];

/// Rail states per mode, indexed TMU, SDPU analog, NADS.
///
/// Before launch only navigation runs; every RTU is powered from Ascent1
/// through the float phases; thermal control is unpowered during descent
/// and everything is off at shutdown.
pub fn switch_policy(mode: OperatingMode) -> [bool; SWITCH_COUNT] {
    use OperatingMode::*;
    match mode {
        PreLaunch => [false, false, true],
        Ascent1 | Ascent2 | Float1 | Float2 => [true, true, true],
        Descent => [false, true, true],
        Shutdown => [false, false, false],
    }
}

/// Policy with operator overrides, which Shutdown ignores.
pub fn desired_switches(mode: OperatingMode, dev: &PcuDev) -> [bool; SWITCH_COUNT] {
    let mut s = switch_policy(mode);
    if mode != OperatingMode::Shutdown {
        for (i, o) in dev.overrides.iter().enumerate() {
            if let Some(on) = o {
                s[i] = *on;
            }
        }
    }
    s
}

/// Drives the rails to `want`, touching only those that differ.
pub fn apply_power_policy(hal: &Hal, want: [bool; SWITCH_COUNT]) -> Result<(), HalError> {
    let have = hal.power_states();
    for i in 0..SWITCH_COUNT {
        if have[i] != want[i] {
            hal.set_power(i, want[i])?;
        }
    }
    Ok(())
}

/// Power distribution and monitoring.
pub struct PcuManager {
    env: SubsystemEnv,
    log: Option<TelemetryLog>,
    initialized: bool,
}

impl PcuManager {
    pub fn new(env: SubsystemEnv) -> Self {
        Self {
            env,
            log: None,
            initialized: false,
        }
    }

    pub fn with_log(mut self, log: TelemetryLog) -> Self {
        self.log = Some(log);
        self
    }

    fn measure(&mut self) -> Result<(drivers::PowerReading, f64), HalError> {
        let hal = &self.env.hal;
        if !self.initialized {
            drivers::power_monitor_init(hal)?;
            self.initialized = true;
        }
        Ok((
            drivers::power_monitor_read(hal)?,
            drivers::board_temp_read(hal)?,
        ))
    }
}

#[async_trait(?Send)]
impl TaskBody for PcuManager {
    async fn run(&mut self, ctx: &TaskCtx) {
        let caller = ctx.caller();
        let pool = self.env.pool.clone();
        let mode = pool.pcu_mode.get(&caller);
        let dev = pool.pcu_dev.get(&caller);
        let _ = apply_power_policy(&self.env.hal, desired_switches(mode, &dev));
        let m = self.measure();
        if m.is_err() {
            self.initialized = false;
        }
        let switches = self.env.hal.power_states();
        let state = pool.pcu.update(&caller, |s| {
            s.switches = switches;
            match &m {
                Ok((r, temp)) => {
                    s.bus_voltage_v = r.bus_voltage_v;
                    s.current_a = r.current_a;
                    s.power_w = r.power_w;
                    s.board_temp_c = *temp;
                    s.stale = false;
                }
                Err(_) => {
                    s.stale = true;
                    s.errors += 1;
                }
            }
            s.clone()
        });
        if let Some(log) = &mut self.log {
            let mut row = vec![
                t_s(ctx.now_ms()),
                mode.to_string(),
                f(state.bus_voltage_v),
                f(state.current_a),
                f(state.power_w),
                f(state.board_temp_c),
            ];
            row.extend(state.switches.iter().map(|s| (*s as u8).to_string()));
            row.push((state.stale as u8).to_string());
            log.row(row);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testkit::*;
    use super::*;
    use crate::datapool::Caller;
    use crate::domain::names::PCU_MANAGER;
    use crate::time::block_on;

    #[test]
    fn prelaunch_powers_only_navigation() {
        let (env, clock) = env_at(954.0);
        let ctx = ctx(PCU_MANAGER, &clock);
        let mut pcu = PcuManager::new(env.clone());
        block_on(pcu.run(&ctx));
        let s = env.pool.pcu.get(&Caller::system());
        assert_eq!(s.switches, [false, false, true]);
        assert!(!s.stale);
    }

    #[test]
    fn nominal_supply_reads_28_volts_and_power_matches() {
        let (env, clock) = env_at(500.0);
        env.pool
            .pcu_mode
            .write(&Caller::system(), OperatingMode::Ascent1);
        let ctx = ctx(PCU_MANAGER, &clock);
        let mut pcu = PcuManager::new(env.clone());
        block_on(pcu.run(&ctx));
        let s = env.pool.pcu.get(&Caller::system());
        assert_eq!(s.switches, [true; 3]);
        assert!((s.bus_voltage_v - 28.0).abs() < 0.05, "{}", s.bus_voltage_v);
        assert!(s.current_a > 0.0);
        let vi = s.bus_voltage_v * s.current_a;
        assert!(
            (s.power_w - vi).abs() <= 0.01 * vi,
            "P {} vs VI {vi}",
            s.power_w
        );
    }

    #[test]
    fn overrides_apply_except_at_shutdown() {
        let dev = PcuDev {
            overrides: [Some(true), None, Some(false)],
            last_seq: Some(3),
        };
        assert_eq!(
            desired_switches(OperatingMode::PreLaunch, &dev),
            [true, false, false]
        );
        assert_eq!(desired_switches(OperatingMode::Shutdown, &dev), [false; 3]);
        assert_eq!(
            desired_switches(OperatingMode::Descent, &PcuDev::default()),
            [false, true, true]
        );
    }
}
