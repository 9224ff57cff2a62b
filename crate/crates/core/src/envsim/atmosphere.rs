//! Standard-atmosphere pressure/altitude conversions and a coarse ambient
//! temperature model.

const P0: f64 = 1013.25;
const T0: f64 = 288.15;
const LAPSE: f64 = 0.0065;
const EXP_TROPO: f64 = 5.255_876;
const H11: f64 = 11_000.0;
const P11: f64 = 226.320_6;
const T11: f64 = 216.65;
const K_STRATO: f64 = 1.576_885e-4;
const H20: f64 = 20_000.0;
const LAPSE_20: f64 = 0.001;
const EXP_20: f64 = 34.163_2;

/// Pressure at the 20 km layer boundary, continuous with the layer below.
fn p20() -> f64 {
    P11 * (-K_STRATO * (H20 - H11)).exp()
}

/// Standard-atmosphere pressure at geopotential altitude `h_m`, valid to 32 km.
pub fn isa_pressure_mbar(h_m: f64) -> f64 {
    let h = h_m.clamp(-500.0, 32_000.0);
    if h <= H11 {
        P0 * (1.0 - LAPSE * h / T0).powf(EXP_TROPO)
    } else if h <= H20 {
        P11 * (-K_STRATO * (h - H11)).exp()
    } else {
        p20() * (1.0 + LAPSE_20 * (h - H20) / T11).powf(-EXP_20)
    }
}

/// Inverse of [`isa_pressure_mbar`].
pub fn altitude_from_pressure(p_mbar: f64) -> f64 {
    let p = p_mbar.clamp(isa_pressure_mbar(32_000.0), isa_pressure_mbar(-500.0));
    if p >= P11 {
        T0 / LAPSE * (1.0 - (p / P0).powf(1.0 / EXP_TROPO))
    } else if p >= p20() {
        H11 - (p / P11).ln() / K_STRATO
    } else {
        H20 + T11 / LAPSE_20 * ((p / p20()).powf(-1.0 / EXP_20) - 1.0)
    }
}

/// Ambient air temperature: 20 °C at the ground reference falling linearly to
/// −56 °C at the tropopause, constant above.
pub fn ambient_temp_c(alt_m: f64) -> f64 {
    let ground = altitude_from_pressure(super::GROUND_PRESSURE_MBAR);
    if alt_m <= ground {
        20.0
    } else if alt_m >= H11 {
        -56.0
    } else {
        20.0 - 76.0 * (alt_m - ground) / (H11 - ground)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sea_level_and_layer_boundaries() {
        assert!((isa_pressure_mbar(0.0) - 1013.25).abs() < 1e-9);
        assert!((isa_pressure_mbar(11_000.0) - 226.32).abs() < 0.05);
        assert!((isa_pressure_mbar(20_000.0) - 54.75).abs() < 0.05);
        // published standard-atmosphere value at 27 km is about 18.5 mbar
        assert!((isa_pressure_mbar(27_000.0) - 18.5).abs() < 0.2);
    }

    #[test]
    fn inverse_round_trips() {
        for h in (0..32_000).step_by(250) {
            let h = h as f64;
            assert!(
                (altitude_from_pressure(isa_pressure_mbar(h)) - h).abs() < 1e-6,
                "{h}"
            );
        }
    }

    #[test]
    fn temperature_limits() {
        assert_eq!(ambient_temp_c(0.0), 20.0);
        assert_eq!(ambient_temp_c(15_000.0), -56.0);
        let mid = ambient_temp_c(5_000.0);
        assert!(mid < 20.0 && mid > -56.0);
    }
}
