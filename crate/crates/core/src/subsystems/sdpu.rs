use async_trait::async_trait;

use super::log::{f, t_s};
use super::{SubsystemEnv, TelemetryLog};
use crate::datapool::PutResult;
use crate::domain::state::SdpuControl;
use crate::domain::{mode_transition, Event, EventKind, MissionConfig, OperatingMode, Stimulus};
use crate::executor::{TaskBody, TaskCtx};
use crate::halsim::adc::DataRate;
use crate::halsim::topology::addr;
use crate::halsim::{drivers, HalError, MuxId, Rtu};
use crate::time::Delay;

pub(crate) const EL_HEADER: &[&str] = &[
    "t_s",
    "mode",
    "rad0",
    "rad1",
    "rad2",
    "rad3",
    "rad4",
    "rad5",
    "baro_a_mbar",
    "baro_b_mbar",
    "rate_mbar_s",
];
pub(crate) const ATL_HEADER: &[&str] = &[
    "t_s", "mode", "dp0", "dp1", "dp2", "dp3", "pd0", "pd1", "pd2", "pd3",
];

/// Least-squares slope of `(x, y)` points; `None` below two distinct x.
pub fn ls_slope<'a>(pts: impl IntoIterator<Item = &'a (f64, f64)> + Clone) -> Option<f64> {
    let n = pts.clone().into_iter().count() as f64;
    if n < 2.0 {
        return None;
    }
    let (sx, sy) = pts
        .clone()
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// One detector step on a new pressure sample. Updates the window and the
/// below-float counter, and returns the event this sample calls for, if
/// that kind has not already been emitted in the current mode.
///
/// Float is reported only from Ascent2 after `float_confirm_samples`
/// consecutive samples at or below the float threshold; cut-off only from a
/// float mode once the full window's slope reaches the rise rate. Any other
/// transition the automaton predicts from pressure and elapsed time is
/// reported as a pressure anomaly naming its target.
pub fn detector_step(
    ctl: &mut SdpuControl,
    mode: OperatingMode,
    t_s: f64,
    pressure_mbar: f64,
    elapsed_in_mode_s: f64,
    cfg: &MissionConfig,
) -> Option<(EventKind, f64, OperatingMode)> {
    if ctl.emitted_in != mode {
        ctl.emitted_in = mode;
        ctl.emitted.clear();
    }
    ctl.window.push_back((t_s, pressure_mbar));
    while ctl.window.len() > cfg.cutoff_window_samples {
        ctl.window.pop_front();
    }
    if pressure_mbar <= cfg.float1_mbar {
        ctl.below_float_count += 1;
    } else {
        ctl.below_float_count = 0;
    }
    let full = ctl.window.len() == cfg.cutoff_window_samples;
    let slope = ls_slope(&ctl.window).unwrap_or(0.0);
    let rate = if full { slope } else { 0.0 };
    let stim = Stimulus::pressure(pressure_mbar)
        .with_rate(rate)
        .with_elapsed(elapsed_in_mode_s);
    let predicted = mode_transition(mode, &stim, cfg).mode;

    let candidate = if mode == OperatingMode::Ascent2 {
        (ctl.below_float_count >= cfg.float_confirm_samples)
            .then_some((EventKind::FloatDetected, OperatingMode::Float1))
    } else if mode.is_float() && predicted == OperatingMode::Descent {
        Some((EventKind::CutoffDetected, OperatingMode::Descent))
    } else {
        None
    };
    let candidate = candidate.or_else(|| {
        let env_owned = (mode == OperatingMode::Ascent2 && predicted == OperatingMode::Float1)
            || (mode.is_float() && predicted == OperatingMode::Descent);
        (predicted != mode && !env_owned).then_some((EventKind::PressureAnomaly, predicted))
    });
    candidate
        .filter(|(k, _)| !ctl.emitted.contains(k))
        .map(|(k, target)| (k, rate, target))
}

#[derive(Debug, Default, Clone)]
struct Analog {
    radiometer_v: [f64; 6],
    diff_pressure_v: [f64; 4],
    photodiode_v: [f64; 4],
}

/// Environmental sensing: radiometers, ATL channels and the two absolute
/// barometers, plus the float/cut-off detectors.
pub struct SdpuMeasurer {
    env: SubsystemEnv,
    el_log: Option<TelemetryLog>,
    atl_log: Option<TelemetryLog>,
}

impl SdpuMeasurer {
    pub fn new(env: SubsystemEnv) -> Self {
        Self {
            env,
            el_log: None,
            atl_log: None,
        }
    }

    pub fn with_logs(mut self, el: TelemetryLog, atl: TelemetryLog) -> Self {
        self.el_log = Some(el);
        self.atl_log = Some(atl);
        self
    }

    async fn analog(&self, d: &dyn Delay) -> Result<Analog, HalError> {
        let hal = &self.env.hal;
        drivers::adc_configure(hal, Rtu::Sdpu, DataRate::Sps128)?;
        let mut a = Analog::default();
        let (atl, el) = (MuxId::new(Rtu::Sdpu, 0), MuxId::new(Rtu::Sdpu, 1));
        for ch in 0..8u8 {
            let v = drivers::acquire_volts(hal, d, atl, ch).await?;
            if ch < 4 {
                a.diff_pressure_v[ch as usize] = v;
            } else {
                a.photodiode_v[ch as usize - 4] = v;
            }
            if ch < 6 {
                a.radiometer_v[ch as usize] = drivers::acquire_volts(hal, d, el, ch).await?;
            }
        }
        Ok(a)
    }
}

#[async_trait(?Send)]
impl TaskBody for SdpuMeasurer {
    async fn run(&mut self, ctx: &TaskCtx) {
        let caller = ctx.caller();
        let pool = &self.env.pool;
        let cfg = &self.env.cfg;
        let mode_cell = pool.sdpu_mode.read(&caller);
        let mode = mode_cell.value;

        let analog = self.analog(ctx).await;
        let mut baro = [f64::NAN; 2];
        let mut baro_errors = 0;
        for (i, a) in [addr::BARO_A, addr::BARO_B].into_iter().enumerate() {
            match drivers::baro_read(&self.env.hal, a) {
                Ok((p, _)) => baro[i] = p,
                Err(_) => baro_errors += 1,
            }
        }
        let now_ms = ctx.now_ms();
        let now_s = now_ms as f64 / 1000.0;
        let elapsed_s = now_ms.saturating_sub(mode_cell.timestamp_ms) as f64 / 1000.0;

        let mut el = pool.el.get(&caller);
        el.abs_pressure_mbar = baro;
        el.baro_errors += baro_errors;
        el.mode_mirror = mode;
        el.analog_valid = analog.is_ok();
        el.samples += 1;
        if let Ok(a) = &analog {
            el.radiometer_v = a.radiometer_v;
        }
        let pressure = el.pressure_mbar();

        let decision = pressure.and_then(|p| {
            pool.sdpu_ctrlr.update(&caller, |c| {
                detector_step(c, mode, now_s, p, elapsed_s, cfg)
            })
        });
        el.pressure_rate_mbar_s = pool
            .sdpu_ctrlr
            .read_with(&caller, |c| ls_slope(&c.window).unwrap_or(0.0));

        if let (Some((kind, rate, target)), Some(p)) = (decision, pressure) {
            let ev = Event::new(kind, now_ms)
                .with("pressure_mbar", p)
                .with("pressure_rate_mbar_s", rate)
                .with("elapsed_in_mode_s", elapsed_s)
                .with("mode", mode.as_str())
                .with("target", target.as_str());
            let accepted = pool.event_queue.put(&caller, ev) == PutResult::Accepted;
            pool.sdpu_ctrlr.update(&caller, |c| {
                if accepted {
                    c.emitted.push(kind);
                } else {
                    c.event_overflows += 1;
                }
            });
        }

        pool.el.write(&caller, el.clone());
        pool.atl.update(&caller, |s| {
            s.mode_mirror = mode;
            s.analog_valid = analog.is_ok();
            if let Ok(a) = &analog {
                s.diff_pressure_v = a.diff_pressure_v;
                s.photodiode_v = a.photodiode_v;
            }
        });
        pool.el_ctrlr.update(&caller, |c| c.mirrored_mode = mode);

        let t = t_s(now_ms);
        if let Some(log) = &mut self.el_log {
            let mut row = vec![t.clone(), mode.to_string()];
            row.extend(el.radiometer_v.iter().map(|v| f(*v)));
            row.extend(el.abs_pressure_mbar.iter().map(|v| f(*v)));
            row.push(f(el.pressure_rate_mbar_s));
            log.row(row);
        }
        if let (Some(log), Ok(a)) = (&mut self.atl_log, &analog) {
            let mut row = vec![t, mode.to_string()];
            row.extend(
                a.diff_pressure_v
                    .iter()
                    .chain(&a.photodiode_v)
                    .map(|v| f(*v)),
            );
            log.row(row);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testkit::*;
    use super::*;
    use crate::datapool::Caller;
    use crate::domain::names::SDPU_MEASURER;
    use crate::envsim::{make_tvac_profile, TvacParams};
    use crate::time::{block_on, NS_PER_S};
    use proptest::prelude::*;

    fn run_series(mode: OperatingMode, series: &[f64], cfg: &MissionConfig) -> Vec<EventKind> {
        let mut ctl = SdpuControl::default();
        let mut out = Vec::new();
        for (i, p) in series.iter().enumerate() {
            if let Some((k, _, _)) = detector_step(&mut ctl, mode, i as f64, *p, i as f64, cfg) {
                ctl.emitted.push(k);
                out.push(k);
            }
        }
        out
    }

    #[test]
    fn slope_of_a_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 3.0 - 0.25 * i as f64)).collect();
        assert!((ls_slope(&pts).unwrap() + 0.25).abs() < 1e-12);
        assert_eq!(ls_slope(&pts[..1]), None);
    }

    #[test]
    fn slope_matches_hand_computation() {
        // x = 0..3, y = 0, 1, 1, 3: Sxy = 4.5, Sxx = 5
        let pts = [(0.0, 0.0), (1.0, 1.0), (2.0, 1.0), (3.0, 3.0)];
        assert!((ls_slope(&pts).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn three_samples_below_float_give_one_event() {
        let cfg = MissionConfig::default();
        let ev = run_series(
            OperatingMode::Ascent2,
            &[30.0, 25.0, 21.4, 21.3, 21.2, 21.1],
            &cfg,
        );
        assert_eq!(ev, vec![EventKind::FloatDetected]);
    }

    #[test]
    fn float_needs_consecutive_confirmation() {
        let cfg = MissionConfig::default();
        let ev = run_series(
            OperatingMode::Ascent2,
            &[21.4, 22.0, 21.4, 22.0, 21.4],
            &cfg,
        );
        assert!(ev.is_empty());
    }

    #[test]
    fn flat_pressure_is_quiet() {
        let cfg = MissionConfig::default();
        for mode in [
            OperatingMode::Ascent1,
            OperatingMode::Float1,
            OperatingMode::Float2,
        ] {
            let series = vec![if mode.is_float() { 15.0 } else { 500.0 }; 30];
            assert!(run_series(mode, &series, &cfg).is_empty(), "{mode}");
        }
    }

    #[test]
    fn sustained_rise_gives_one_cutoff() {
        let cfg = MissionConfig::default();
        let series: Vec<f64> = (0..20).map(|i| 15.0 + 0.6 * i as f64).collect();
        assert_eq!(
            run_series(OperatingMode::Float2, &series, &cfg),
            vec![EventKind::CutoffDetected]
        );
        // slower than the rate: nothing
        let slow: Vec<f64> = (0..20).map(|i| 15.0 + 0.4 * i as f64).collect();
        assert!(run_series(OperatingMode::Float2, &slow, &cfg).is_empty());
    }

    #[test]
    fn threshold_crossings_are_anomalies_with_targets() {
        let cfg = MissionConfig::default();
        let mut ctl = SdpuControl::default();
        let got = detector_step(&mut ctl, OperatingMode::PreLaunch, 0.0, 899.0, 0.0, &cfg);
        assert_eq!(
            got,
            Some((EventKind::PressureAnomaly, 0.0, OperatingMode::Ascent1))
        );
        let mut ctl = SdpuControl::default();
        let got = detector_step(
            &mut ctl,
            OperatingMode::Float1,
            0.0,
            15.0,
            1200.0,
            &MissionConfig::tvac(),
        );
        assert_eq!(got.map(|g| g.2), Some(OperatingMode::Float2));
    }

    #[test]
    fn emitted_resets_on_mode_change() {
        let cfg = MissionConfig::default();
        let mut ctl = SdpuControl::default();
        let k = detector_step(&mut ctl, OperatingMode::PreLaunch, 0.0, 899.0, 0.0, &cfg)
            .unwrap()
            .0;
        ctl.emitted.push(k);
        assert_eq!(
            detector_step(&mut ctl, OperatingMode::PreLaunch, 1.0, 898.0, 1.0, &cfg),
            None
        );
        assert_eq!(
            detector_step(&mut ctl, OperatingMode::Ascent1, 2.0, 299.0, 0.0, &cfg)
                .unwrap()
                .2,
            OperatingMode::Ascent2
        );
    }

    proptest! {
        #[test]
        fn at_most_one_event_per_kind_per_residency(
            series in proptest::collection::vec(0.1f64..1000.0, 1..60),
            mode_idx in 0usize..7,
        ) {
            let mode = OperatingMode::CHAIN[mode_idx];
            let ev = run_series(mode, &series, &MissionConfig::default());
            for k in EventKind::ALL {
                prop_assert!(ev.iter().filter(|e| **e == k).count() <= 1);
            }
        }
    }

    #[test]
    fn cycle_publishes_el_atl_and_queues_events() {
        let p = make_tvac_profile(&TvacParams::default()).unwrap();
        let (env, clock) = env_with(p, MissionConfig::tvac());
        power_all(&env);
        let ctx = ctx(SDPU_MEASURER, &clock);
        let mut sdpu = SdpuMeasurer::new(env.clone());
        // pressure drops below 900 mbar after 324 s
        clock.advance_to(330 * NS_PER_S);
        block_on(sdpu.run(&ctx));
        let sys = Caller::system();
        let el = env.pool.el.get(&sys);
        assert!(el.analog_valid);
        assert!((el.pressure_mbar().unwrap() - 899.0).abs() < 0.5);
        assert!(el.radiometer_v.iter().all(|v| *v > 1.0));
        let atl = env.pool.atl.get(&sys);
        assert!(atl.photodiode_v.iter().all(|v| *v > 0.0));
        let q = env.pool.event_queue.peek_all();
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].kind, EventKind::PressureAnomaly);
        assert_eq!(q[0].payload["target"], "Ascent1");
        // debounced on the next cycle
        clock.advance_to(331 * NS_PER_S);
        block_on(sdpu.run(&ctx));
        assert_eq!(env.pool.event_queue.len(), 1);
        assert_eq!(
            env.pool.el_ctrlr.get(&sys).mirrored_mode,
            OperatingMode::PreLaunch
        );
    }

    #[test]
    fn full_queue_counts_overflow_and_retries() {
        let p = make_tvac_profile(&TvacParams::default()).unwrap();
        let (env, clock) = env_with(p, MissionConfig::tvac());
        let sys = Caller::system();
        for i in 0..10 {
            env.pool
                .event_queue
                .put(&sys, Event::new(EventKind::OperatorInjected, i));
        }
        let ctx = ctx(SDPU_MEASURER, &clock);
        let mut sdpu = SdpuMeasurer::new(env.clone());
        clock.advance_to(330 * NS_PER_S);
        block_on(sdpu.run(&ctx));
        assert_eq!(env.pool.sdpu_ctrlr.get(&sys).event_overflows, 1);
        assert!(!env.pool.el.get(&sys).analog_valid, "analog rail off");
        env.pool.event_queue.try_take(&sys);
        clock.advance_to(331 * NS_PER_S);
        block_on(sdpu.run(&ctx));
        assert_eq!(env.pool.event_queue.len(), 10);
        assert_eq!(
            env.pool.sdpu_ctrlr.get(&sys).emitted,
            vec![EventKind::PressureAnomaly]
        );
    }
}
