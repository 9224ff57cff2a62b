use serde::{Deserialize, Serialize};

use super::atmosphere::{altitude_from_pressure, ambient_temp_c, isa_pressure_mbar};
use super::profile::{Profile, ProfileError, ProfilePoint};
use super::{GROUND_PRESSURE_MBAR, REFERENCE_LAT, REFERENCE_LON};

/// Thermal-vacuum chamber pressure cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TvacParams {
    pub start_mbar: f64,
    pub floor_mbar: f64,
    pub rate_mbar_per_min: f64,
    pub hold_s: f64,
    pub ramp_up: bool,
}

impl Default for TvacParams {
    fn default() -> Self {
        Self {
            start_mbar: GROUND_PRESSURE_MBAR,
            floor_mbar: 11.0,
            rate_mbar_per_min: 10.0,
            hold_s: 1800.0,
            ramp_up: true,
        }
    }
}

impl TvacParams {
    /// Duration of the pump-down leg, s.
    pub fn descent_s(&self) -> f64 {
        (self.start_mbar - self.floor_mbar) / self.rate_mbar_per_min * 60.0
    }
}

fn chamber_point(t: f64, p: f64) -> ProfilePoint {
    ProfilePoint {
        t,
        pressure: p,
        ambient_temp: ambient_temp_c(altitude_from_pressure(p)),
        latitude: REFERENCE_LAT,
        longitude: REFERENCE_LON,
        altitude: altitude_from_pressure(GROUND_PRESSURE_MBAR),
    }
}

/// Linear pump-down from `start` to `floor`, an optional hold, and an optional
/// symmetric repressurisation back to `start`. The chamber sits at the ground
/// reference fix.
pub fn make_tvac_profile(params: &TvacParams) -> Result<Profile, ProfileError> {
    let TvacParams {
        start_mbar,
        floor_mbar,
        rate_mbar_per_min,
        hold_s,
        ramp_up,
    } = *params;
    if !(start_mbar > floor_mbar && floor_mbar > 0.0) {
        return Err(ProfileError::Parameters(format!(
            "need start > floor > 0 (got {start_mbar} / {floor_mbar})"
        )));
    }
    if !(rate_mbar_per_min > 0.0) || hold_s < 0.0 {
        return Err(ProfileError::Parameters(
            "rate must be positive and hold non-negative".into(),
        ));
    }
    let d = params.descent_s();
    let mut pts = vec![chamber_point(0.0, start_mbar), chamber_point(d, floor_mbar)];
    let mut t = d;
    if hold_s > 0.0 {
        t += hold_s;
        pts.push(chamber_point(t, floor_mbar));
    }
    if ramp_up {
        pts.push(chamber_point(t + d, start_mbar));
    }
    Profile::new("tvac", pts)
}

/// A profile holding constant conditions at one position for `duration_s`.
pub fn make_stationary_profile(
    pressure_mbar: f64,
    lat: f64,
    lon: f64,
    duration_s: f64,
) -> Result<Profile, ProfileError> {
    let alt = altitude_from_pressure(pressure_mbar);
    let p = |t| ProfilePoint {
        t,
        pressure: pressure_mbar,
        ambient_temp: ambient_temp_c(alt),
        latitude: lat,
        longitude: lon,
        altitude: alt,
    };
    Profile::new("stationary", vec![p(0.0), p(duration_s.max(1.0))])
}

/// Shape of the nominal flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlightProfileConfig {
    pub prelaunch_s: f64,
    pub ascent_rate_mps: f64,
    pub float_altitude_m: f64,
    pub float_s: f64,
    pub descent_s: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    /// Ground-track drift once airborne, degrees per second.
    pub drift_lat_deg_s: f64,
    pub drift_lon_deg_s: f64,
    /// Spacing of interpolation knots on the ascent and descent legs, s.
    pub knot_s: f64,
}

impl Default for FlightProfileConfig {
    fn default() -> Self {
        Self {
            prelaunch_s: 900.0,
            ascent_rate_mps: 5.0,
            float_altitude_m: 27_000.0,
            float_s: 12_600.0,
            descent_s: 1_800.0,
            origin_lat: 40.437_700,
            origin_lon: -3.672_524,
            drift_lat_deg_s: 2.0e-6,
            drift_lon_deg_s: 1.5e-5,
            knot_s: 60.0,
        }
    }
}

/// Ground hold, constant-rate ascent to float altitude, a float leg and a fast
/// descent back to the ground reference pressure.
pub fn make_flight_profile(cfg: &FlightProfileConfig) -> Result<Profile, ProfileError> {
    if [
        cfg.prelaunch_s,
        cfg.ascent_rate_mps,
        cfg.float_s,
        cfg.descent_s,
        cfg.knot_s,
    ]
    .iter()
    .any(|v| !(*v > 0.0))
    {
        return Err(ProfileError::Parameters(
            "flight durations and rates must be positive".into(),
        ));
    }
    let h0 = altitude_from_pressure(GROUND_PRESSURE_MBAR);
    if !(cfg.float_altitude_m > h0) {
        return Err(ProfileError::Parameters(
            "float altitude must be above the ground".into(),
        ));
    }
    let ascent_s = (cfg.float_altitude_m - h0) / cfg.ascent_rate_mps;
    let t_launch = cfg.prelaunch_s;
    let t_float = t_launch + ascent_s;
    let t_cut = t_float + cfg.float_s;
    let t_end = t_cut + cfg.descent_s;

    let point = |t: f64, h: f64| {
        let airborne = (t - t_launch).max(0.0);
        ProfilePoint {
            t,
            pressure: if h <= h0 {
                GROUND_PRESSURE_MBAR
            } else {
                isa_pressure_mbar(h)
            },
            ambient_temp: ambient_temp_c(h),
            latitude: cfg.origin_lat + cfg.drift_lat_deg_s * airborne,
            longitude: cfg.origin_lon + cfg.drift_lon_deg_s * airborne,
            altitude: h,
        }
    };

    let mut pts = vec![point(0.0, h0), point(t_launch, h0)];
    let mut t = t_launch + cfg.knot_s;
    while t < t_float {
        pts.push(point(t, h0 + cfg.ascent_rate_mps * (t - t_launch)));
        t += cfg.knot_s;
    }
    pts.push(point(t_float, cfg.float_altitude_m));
    pts.push(point(t_cut, cfg.float_altitude_m));
    let mut t = t_cut + cfg.knot_s;
    while t < t_end {
        let w = (t - t_cut) / cfg.descent_s;
        pts.push(point(
            t,
            cfg.float_altitude_m + (h0 - cfg.float_altitude_m) * w,
        ));
        t += cfg.knot_s;
    }
    pts.push(point(t_end, h0));
    Profile::new("flight", pts)
}
