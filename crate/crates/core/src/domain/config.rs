use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::OperatingMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid mission config: {0}")]
    Invalid(String),
    #[error("cannot parse mission config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read mission config: {0}")]
    Io(#[from] std::io::Error),
}

/// Thermal control parameters for the HTL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeaterConfig {
    /// Plate setpoint per mode, °C.
    pub setpoint_c: BTreeMap<OperatingMode, f64>,
    /// Half-width of the on/off band around the setpoint, °C.
    pub hysteresis_c: f64,
    /// Maximum heater duty per mode, percent.
    pub duty_limit_pct: BTreeMap<OperatingMode, f64>,
}

impl Default for HeaterConfig {
    fn default() -> Self {
        use OperatingMode::*;
        let setpoint_c = OperatingMode::CHAIN.iter().map(|&m| (m, 20.0)).collect();
        let duty_limit_pct = [
            (PreLaunch, 0.0),
            (Ascent1, 30.0),
            (Ascent2, 60.0),
            (Float1, 60.0),
            (Float2, 100.0),
            (Descent, 0.0),
            (Shutdown, 0.0),
        ]
        .into_iter()
        .collect();
        Self {
            setpoint_c,
            hysteresis_c: 0.5,
            duty_limit_pct,
        }
    }
}

impl HeaterConfig {
    pub fn setpoint(&self, mode: OperatingMode) -> f64 {
        self.setpoint_c.get(&mode).copied().unwrap_or(20.0)
    }

    /// Duty cap for `mode`; always zero once heaters must be off.
    pub fn duty_limit(&self, mode: OperatingMode) -> f64 {
        match mode {
            OperatingMode::Descent | OperatingMode::Shutdown => 0.0,
            m => self
                .duty_limit_pct
                .get(&m)
                .copied()
                .unwrap_or(0.0)
                .clamp(0.0, 100.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TmConfig {
    pub sc_period_ms: u64,
    pub hk_period_ms: u64,
}

impl Default for TmConfig {
    fn default() -> Self {
        Self {
            sc_period_ms: 1000,
            hk_period_ms: 10_000,
        }
    }
}

/// Every tunable of the onboard software. Loads from JSON; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissionConfig {
    /// PreLaunch -> Ascent1 when pressure drops below this, mbar.
    pub ascent1_mbar: f64,
    /// Ascent1 -> Ascent2 when pressure drops below this, mbar.
    pub ascent2_mbar: f64,
    /// Ascent2 -> Float1 when pressure is at or below this, mbar.
    pub float1_mbar: f64,
    /// Time spent in Float1 before Float2, s.
    pub float2_delta_s: f64,
    /// Sustained pressure rise that indicates cut-off, mbar/s.
    pub cutoff_rise_rate_mbar_s: f64,
    pub cutoff_window_samples: usize,
    /// Consecutive samples at or below the float threshold before reporting float.
    pub float_confirm_samples: usize,
    pub heater: HeaterConfig,
    pub tm: TmConfig,
    pub tc_queue_capacity: usize,
    pub event_queue_capacity: usize,
    pub gs_listen: String,
    /// Simulated seconds per wall second in threaded runs.
    pub time_scale: f64,
    pub heartbeat_period_ms: u64,
    pub heartbeat_timeout_ms: u64,
    /// Gaussian sigma of the absolute barometers, mbar.
    pub barometer_noise_mbar: f64,
    pub seed: u64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            ascent1_mbar: 900.0,
            ascent2_mbar: 300.0,
            float1_mbar: 21.5,
            float2_delta_s: 6.0 * 3600.0,
            cutoff_rise_rate_mbar_s: 0.5,
            cutoff_window_samples: 5,
            float_confirm_samples: 2,
            heater: HeaterConfig::default(),
            tm: TmConfig::default(),
            tc_queue_capacity: 10,
            event_queue_capacity: 10,
            gs_listen: "127.0.0.1:5070".into(),
            time_scale: 1.0,
            heartbeat_period_ms: 1000,
            heartbeat_timeout_ms: 3000,
            barometer_noise_mbar: 0.05,
            seed: 1,
        }
    }
}

impl MissionConfig {
    /// Nominal flight parameters.
    pub fn flight() -> Self {
        Self::default()
    }

    /// Thermal-vacuum chamber replay: the float-2 delay is shortened to
    /// 20 minutes and the cut-off detector is tuned to the chamber's
    /// 10 mbar/min repressurisation.
    pub fn tvac() -> Self {
        Self {
            float2_delta_s: 1200.0,
            cutoff_rise_rate_mbar_s: 0.1,
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: MissionConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |s: String| Err(ConfigError::Invalid(s));
        if !(self.ascent1_mbar > self.ascent2_mbar
            && self.ascent2_mbar > self.float1_mbar
            && self.float1_mbar > 0.0)
        {
            return bad(format!(
                "thresholds must satisfy ascent1 > ascent2 > float1 > 0 (got {} / {} / {})",
                self.ascent1_mbar, self.ascent2_mbar, self.float1_mbar
            ));
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return bad(format!(
                "time_scale must be positive (got {})",
                self.time_scale
            ));
        }
        if !(self.float2_delta_s > 0.0) {
            return bad("float2_delta_s must be positive".into());
        }
        if !(self.cutoff_rise_rate_mbar_s > 0.0) {
            return bad("cutoff_rise_rate_mbar_s must be positive".into());
        }
        if self.cutoff_window_samples < 2 {
            return bad("cutoff_window_samples must be at least 2".into());
        }
        if self.float_confirm_samples == 0 {
            return bad("float_confirm_samples must be at least 1".into());
        }
        if self.tc_queue_capacity == 0 || self.event_queue_capacity == 0 {
            return bad("queue capacities must be non-zero".into());
        }
        if self.tm.sc_period_ms == 0 || self.tm.hk_period_ms == 0 {
            return bad("TM periods must be non-zero".into());
        }
        if self.heartbeat_timeout_ms <= self.heartbeat_period_ms {
            return bad("heartbeat timeout must exceed the heartbeat period".into());
        }
        if self.heater.hysteresis_c < 0.0 {
            return bad("hysteresis must be non-negative".into());
        }
        if self
            .heater
            .duty_limit_pct
            .values()
            .any(|d| !(0.0..=100.0).contains(d))
        {
            return bad("duty limits must lie in [0, 100] %".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        MissionConfig::default().validate().unwrap();
        MissionConfig::tvac().validate().unwrap();
        assert_eq!(MissionConfig::tvac().float2_delta_s, 1200.0);
        assert_eq!(MissionConfig::flight().float2_delta_s, 21600.0);
    }

    #[test]
    fn json_partial_override() {
        let cfg =
            MissionConfig::from_json(r#"{"float2_delta_s": 600, "ascent2_mbar": 250}"#).unwrap();
        assert_eq!(cfg.float2_delta_s, 600.0);
        assert_eq!(cfg.ascent2_mbar, 250.0);
        assert_eq!(cfg.ascent1_mbar, 900.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = MissionConfig::from_json(r#"{"ascent3_mbar": 1}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)), "{err}");
    }

    #[test]
    fn threshold_order_enforced() {
        let err = MissionConfig::from_json(r#"{"ascent2_mbar": 950}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
        let err = MissionConfig::from_json(r#"{"time_scale": 0}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }

    #[test]
    fn duty_limits_by_mode() {
        let h = HeaterConfig::default();
        assert_eq!(h.duty_limit(OperatingMode::Float1), 60.0);
        assert_eq!(h.duty_limit(OperatingMode::Float2), 100.0);
        assert_eq!(h.duty_limit(OperatingMode::Descent), 0.0);
        let mut h2 = h.clone();
        h2.duty_limit_pct.insert(OperatingMode::Shutdown, 50.0);
        assert_eq!(h2.duty_limit(OperatingMode::Shutdown), 0.0);
    }

    #[test]
    fn mode_keyed_maps_round_trip() {
        let s = serde_json::to_string(&HeaterConfig::default()).unwrap();
        assert!(s.contains("\"Float2\":100.0"));
        let back: HeaterConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, HeaterConfig::default());
    }
}
