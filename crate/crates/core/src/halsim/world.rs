//! Physical state behind the simulated hardware: environment truth, power
//! rails, multiplexer select lines, heater thermal zones and bench fixtures.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::pt1000;
use super::topology::{PowerDomain, Rtu};
use crate::envsim::{Profile, ProfilePoint};
use crate::time::NS_PER_S;

/// Fixed bench voltages keyed by (mux, channel).
type BenchMap = BTreeMap<(u8, u8), f64>;

/// First-order thermal constants of a heater zone.
pub const ZONE_TAU_S: f64 = 600.0;
/// Heating rate at 100 % duty, °C/s.
pub const ZONE_GAIN_C_S: f64 = 0.25;
pub const MUX_SETTLE_NS: u64 = 1_000_000;
pub const PLATES_PER_ZONE: usize = 7;

#[derive(Debug, Clone, Copy, Default)]
struct SelectLines {
    channel: u8,
    previous: u8,
    changed_ns: Option<u64>,
}

#[derive(Debug)]
struct Thermal {
    last_ns: u64,
    zone_c: [f64; 4],
    pwm_pct: [f64; 4],
    bank_enabled: [bool; 2],
}

/// What drives an analog multiplexer input when no bench fixture is loaded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalogSource {
    Thermistor { plate: usize },
    DiffPressure(usize),
    Photodiode(usize),
    Radiometer(usize),
    Unconnected,
}

impl AnalogSource {
    /// Fixed channel map of both RTUs.
    pub fn of(rtu: Rtu, mux: u8, channel: u8) -> AnalogSource {
        match (rtu, mux, channel) {
            (Rtu::Tmu, m @ 0..=3, c @ 0..=6) => AnalogSource::Thermistor {
                plate: m as usize * PLATES_PER_ZONE + c as usize,
            },
            (Rtu::Sdpu, 0, c @ 0..=3) => AnalogSource::DiffPressure(c as usize),
            (Rtu::Sdpu, 0, c @ 4..=7) => AnalogSource::Photodiode(c as usize - 4),
            (Rtu::Sdpu, 1, c @ 0..=5) => AnalogSource::Radiometer(c as usize),
            _ => AnalogSource::Unconnected,
        }
    }
}

/// Static parameters of the simulated plant.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub seed: u64,
    /// Gaussian sigma on profile-driven analog channels, V.
    pub analog_noise_v: f64,
    pub supply_v: f64,
    pub board_temp_c: f64,
    /// UTC at mission time zero, ms since the Unix epoch.
    pub utc_origin_ms: i64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            analog_noise_v: 3.0e-4,
            supply_v: 28.0,
            board_temp_c: 20.3,
            // 2025-10-01T06:00:00Z
            utc_origin_ms: 1_759_298_400_000,
        }
    }
}

pub struct World {
    profile: Profile,
    cfg: WorldConfig,
    rails: [AtomicBool; 3],
    select: Mutex<[SelectLines; 2]>,
    thermal: Mutex<Thermal>,
    bench: Mutex<[Option<BenchMap>; 2]>,
    supply_v: Mutex<f64>,
    noise: Mutex<(ChaCha8Rng, Normal<f64>)>,
}

impl std::fmt::Debug for World {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("World")
            .field("profile", &self.profile.name())
            .finish_non_exhaustive()
    }
}

impl World {
    pub fn new(profile: Profile, cfg: WorldConfig) -> Self {
        let t0 = profile.at(0.0).ambient_temp;
        let normal = Normal::new(0.0, cfg.analog_noise_v.max(0.0)).expect("finite sigma");
        Self {
            rails: [
                AtomicBool::new(false),
                AtomicBool::new(false),
                AtomicBool::new(false),
            ],
            select: Mutex::new([SelectLines::default(); 2]),
            thermal: Mutex::new(Thermal {
                last_ns: 0,
                zone_c: [t0; 4],
                pwm_pct: [0.0; 4],
                bank_enabled: [false; 2],
            }),
            bench: Mutex::new([None, None]),
            supply_v: Mutex::new(cfg.supply_v),
            noise: Mutex::new((ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA11A_0000), normal)),
            profile,
            cfg,
        }
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn env(&self, now_ns: u64) -> ProfilePoint {
        self.profile.at(now_ns as f64 / NS_PER_S as f64)
    }

    pub fn utc_ms(&self, now_ns: u64) -> i64 {
        self.cfg.utc_origin_ms + (now_ns / 1_000_000) as i64
    }

    pub fn is_powered(&self, d: PowerDomain) -> bool {
        match d.switch() {
            Some(i) => self.rails[i].load(Ordering::Acquire),
            None => true,
        }
    }

    pub(crate) fn set_rail(&self, now_ns: u64, switch: usize, on: bool) {
        // heater drive depends on the TMU rail
        self.advance_thermal(now_ns);
        self.rails[switch].store(on, Ordering::Release);
    }

    pub fn rails(&self) -> [bool; 3] {
        [0, 1, 2].map(|i| self.rails[i].load(Ordering::Acquire))
    }

    pub fn supply_voltage(&self) -> f64 {
        *self.supply_v.lock().unwrap()
    }

    pub fn set_supply_voltage(&self, v: f64) {
        *self.supply_v.lock().unwrap() = v;
    }

    pub fn board_temp_c(&self) -> f64 {
        self.cfg.board_temp_c
    }

    /// Load current drawn from the supply, A.
    pub fn load_current_a(&self) -> f64 {
        let on = self.rails().iter().filter(|r| **r).count() as f64;
        0.045 + 0.025 * on
    }

    // select lines ---------------------------------------------------------

    pub(crate) fn set_select_bit(&self, now_ns: u64, rtu: Rtu, bit: u8, level: bool) {
        let mut sel = self.select.lock().unwrap();
        let s = &mut sel[rtu.index()];
        let mask = 1u8 << bit;
        let ch = if level {
            s.channel | mask
        } else {
            s.channel & !mask
        };
        drop(sel);
        self.set_select_channel(now_ns, rtu, ch);
    }

    pub(crate) fn set_select_channel(&self, now_ns: u64, rtu: Rtu, ch: u8) {
        let mut sel = self.select.lock().unwrap();
        let s = &mut sel[rtu.index()];
        if ch != s.channel {
            s.previous = s.channel;
            s.channel = ch;
            s.changed_ns = Some(now_ns);
        }
    }

    /// Channel currently routed to the muxes of `rtu` at `now_ns`, taking the
    /// settling delay into account.
    pub fn routed_channel(&self, rtu: Rtu, now_ns: u64) -> u8 {
        let s = self.select.lock().unwrap()[rtu.index()];
        match s.changed_ns {
            Some(t) if now_ns.saturating_sub(t) < MUX_SETTLE_NS => s.previous,
            _ => s.channel,
        }
    }

    pub fn selected_channel(&self, rtu: Rtu) -> u8 {
        self.select.lock().unwrap()[rtu.index()].channel
    }

    // bench fixtures -------------------------------------------------------

    pub(crate) fn set_bench(&self, rtu: Rtu, map: Option<BenchMap>) {
        self.bench.lock().unwrap()[rtu.index()] = map;
    }

    pub fn bench_loaded(&self, rtu: Rtu) -> bool {
        self.bench.lock().unwrap()[rtu.index()].is_some()
    }

    /// Voltage presented to ADC input `input` of `rtu` at `now_ns`.
    pub fn analog_volts(&self, rtu: Rtu, input: u8, now_ns: u64) -> f64 {
        let ch = self.routed_channel(rtu, now_ns);
        if let Some(map) = &self.bench.lock().unwrap()[rtu.index()] {
            return map.get(&(input, ch)).copied().unwrap_or(0.0);
        }
        let truth = self.source_truth(AnalogSource::of(rtu, input, ch), now_ns);
        match truth {
            Some(v) => v + self.draw_noise(),
            None => 0.0,
        }
    }

    fn draw_noise(&self) -> f64 {
        if self.cfg.analog_noise_v <= 0.0 {
            return 0.0;
        }
        let mut g = self.noise.lock().unwrap();
        let (rng, normal) = &mut *g;
        normal.sample(rng)
    }

    /// Noise-free value of an analog source.
    pub fn source_truth(&self, src: AnalogSource, now_ns: u64) -> Option<f64> {
        let env = self.env(now_ns);
        let t = now_ns as f64 / NS_PER_S as f64;
        match src {
            AnalogSource::Thermistor { plate } => {
                let temp = self.plate_temp_c(plate, now_ns);
                pt1000::pt1000_voltage(temp.clamp(pt1000::T_MIN_C, pt1000::T_MAX_C)).ok()
            }
            AnalogSource::DiffPressure(k) => Some(1.0 + 0.002 * env.pressure + 0.01 * k as f64),
            AnalogSource::Photodiode(k) => {
                let sky = (env.altitude / 30_000.0).clamp(0.0, 1.0);
                Some(0.4 + 1.6 * sky + 0.05 * k as f64)
            }
            AnalogSource::Radiometer(k) => {
                let phase = k as f64 * std::f64::consts::FRAC_PI_3;
                Some(2.0 + 0.3 * (2.0 * std::f64::consts::PI * t / 3600.0 + phase).sin())
            }
            AnalogSource::Unconnected => None,
        }
    }

    // thermal --------------------------------------------------------------

    fn effective_duty(th: &Thermal, tmu_on: bool, i: usize) -> f64 {
        if tmu_on && th.bank_enabled[i / 2] {
            th.pwm_pct[i].clamp(0.0, 100.0) / 100.0
        } else {
            0.0
        }
    }

    fn advance_locked(&self, th: &mut Thermal, now_ns: u64) {
        if now_ns <= th.last_ns {
            return;
        }
        let dt = (now_ns - th.last_ns) as f64 / NS_PER_S as f64;
        let amb = self.env(now_ns).ambient_temp;
        let tmu_on = self.is_powered(PowerDomain::Tmu);
        let decay = (-dt / ZONE_TAU_S).exp();
        for i in 0..4 {
            let eq = amb + ZONE_TAU_S * ZONE_GAIN_C_S * Self::effective_duty(th, tmu_on, i);
            th.zone_c[i] = eq + (th.zone_c[i] - eq) * decay;
        }
        th.last_ns = now_ns;
    }

    pub(crate) fn advance_thermal(&self, now_ns: u64) {
        let mut th = self.thermal.lock().unwrap();
        self.advance_locked(&mut th, now_ns);
    }

    pub(crate) fn set_pwm(&self, now_ns: u64, ch: usize, duty_pct: f64) {
        let mut th = self.thermal.lock().unwrap();
        self.advance_locked(&mut th, now_ns);
        th.pwm_pct[ch] = duty_pct;
    }

    pub(crate) fn set_bank(&self, now_ns: u64, bank: usize, on: bool) {
        let mut th = self.thermal.lock().unwrap();
        self.advance_locked(&mut th, now_ns);
        th.bank_enabled[bank] = on;
    }

    pub fn pwm(&self) -> [f64; 4] {
        self.thermal.lock().unwrap().pwm_pct
    }

    pub fn zone_temp_c(&self, zone: usize, now_ns: u64) -> f64 {
        let mut th = self.thermal.lock().unwrap();
        self.advance_locked(&mut th, now_ns);
        th.zone_c[zone]
    }

    /// Plate temperature: its zone's temperature plus a fixed per-plate
    /// gradient.
    pub fn plate_temp_c(&self, plate: usize, now_ns: u64) -> f64 {
        let zone = plate / PLATES_PER_ZONE;
        let offset = (plate % PLATES_PER_ZONE) as f64 * 0.1 - 0.3;
        self.zone_temp_c(zone, now_ns) + offset
    }
}
