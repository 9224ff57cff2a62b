//! Platinum thermistor in a resistive divider.

use super::HalError;

pub const R0_OHM: f64 = 1000.0;
pub const A: f64 = 3.9083e-3;
pub const B: f64 = -5.775e-7;
pub const VREF_V: f64 = 4.75;
pub const RREF_OHM: f64 = 1000.0;
pub const T_MIN_C: f64 = -90.0;
pub const T_MAX_C: f64 = 125.0;

/// Callendar–Van Dusen resistance above 0 °C, also used below 0 °C (the
/// cubic term is ignored).
pub fn resistance(temp_c: f64) -> f64 {
    R0_OHM * (1.0 + A * temp_c + B * temp_c * temp_c)
}

pub fn pt1000_voltage(temp_c: f64) -> Result<f64, HalError> {
    if !(T_MIN_C..=T_MAX_C).contains(&temp_c) {
        return Err(HalError::Model(format!(
            "PT1000 temperature {temp_c} °C out of range"
        )));
    }
    let r = resistance(temp_c);
    Ok(VREF_V * r / (r + RREF_OHM))
}

/// Temperature for a divider output voltage: solves the resistance
/// quadratic on the physical branch.
pub fn pt1000_temperature(volts: f64) -> Result<f64, HalError> {
    if !(volts > 0.0 && volts < VREF_V) {
        return Err(HalError::Model(format!(
            "divider voltage {volts} V out of range"
        )));
    }
    let r = RREF_OHM * volts / (VREF_V - volts);
    // B t² + A t + (1 - r/R0) = 0
    let c = 1.0 - r / R0_OHM;
    let disc = A * A - 4.0 * B * c;
    if disc < 0.0 {
        return Err(HalError::Model(format!("no temperature for {volts} V")));
    }
    // physical root (-A + √disc) / 2B, rewritten to avoid cancellation
    Ok(2.0 * c / (-A - disc.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bisect(v: f64) -> f64 {
        let (mut lo, mut hi) = (T_MIN_C - 1.0, T_MAX_C + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let r = R0_OHM * (1.0 + A * mid + B * mid * mid);
            if VREF_V * r / (r + RREF_OHM) < v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn zero_celsius_is_divider_midpoint() {
        assert_eq!(resistance(0.0), 1000.0);
        assert!((pt1000_voltage(0.0).unwrap() - 2.375).abs() < 1e-12);
    }

    #[test]
    fn hundred_celsius() {
        let r = 1000.0 * (1.0 + 3.9083e-3 * 100.0 - 5.775e-7 * 1e4);
        assert!((resistance(100.0) - r).abs() < 1e-9);
        assert!((r - 1385.055).abs() < 1e-9);
        let v = 4.75 * r / (r + 1000.0);
        assert!((pt1000_voltage(100.0).unwrap() - v).abs() < 1e-12);
        assert!((v - 2.75843).abs() < 5e-5);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(pt1000_voltage(-91.0).is_err());
        assert!(pt1000_voltage(126.0).is_err());
        assert!(pt1000_temperature(0.0).is_err());
    }

    proptest! {
        #[test]
        fn inverse_matches_bisection(t in T_MIN_C..=T_MAX_C) {
            let v = pt1000_voltage(t).unwrap();
            let inv = pt1000_temperature(v).unwrap();
            prop_assert!((inv - t).abs() < 1e-6);
            prop_assert!((bisect(v) - t).abs() < 1e-6);
        }
    }
}
