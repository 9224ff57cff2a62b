use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile needs at least two points, got {0}")]
    TooShort(usize),
    #[error("profile times must be strictly increasing (point {0})")]
    NotIncreasing(usize),
    #[error("profile pressure must be positive (point {0})")]
    NonPositivePressure(usize),
    #[error("invalid profile parameters: {0}")]
    Parameters(String),
    #[error("profile CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Environment truth at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    #[serde(rename = "t_s")]
    pub t: f64,
    #[serde(rename = "pressure_mbar")]
    pub pressure: f64,
    #[serde(rename = "temp_c")]
    pub ambient_temp: f64,
    #[serde(rename = "lat")]
    pub latitude: f64,
    #[serde(rename = "lon")]
    pub longitude: f64,
    #[serde(rename = "alt_m")]
    pub altitude: f64,
}

impl ProfilePoint {
    fn lerp(a: &ProfilePoint, b: &ProfilePoint, t: f64) -> ProfilePoint {
        let w = (t - a.t) / (b.t - a.t);
        let mix = |x: f64, y: f64| x + (y - x) * w;
        ProfilePoint {
            t,
            pressure: mix(a.pressure, b.pressure),
            ambient_temp: mix(a.ambient_temp, b.ambient_temp),
            latitude: mix(a.latitude, b.latitude),
            longitude: mix(a.longitude, b.longitude),
            altitude: mix(a.altitude, b.altitude),
        }
    }
}

/// Piecewise-linear environment profile. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    name: String,
    points: Vec<ProfilePoint>,
}

impl Profile {
    pub fn new(name: impl Into<String>, points: Vec<ProfilePoint>) -> Result<Self, ProfileError> {
        if points.len() < 2 {
            return Err(ProfileError::TooShort(points.len()));
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.pressure > 0.0) {
                return Err(ProfileError::NonPositivePressure(i));
            }
            if i > 0 && !(p.t > points[i - 1].t) {
                return Err(ProfileError::NotIncreasing(i));
            }
        }
        Ok(Self {
            name: name.into(),
            points,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[ProfilePoint] {
        &self.points
    }

    pub fn start(&self) -> f64 {
        self.points[0].t
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1].t
    }

    pub fn duration(&self) -> f64 {
        self.end() - self.start()
    }

    /// Interpolated point at `t` seconds, clamped to the end points.
    pub fn at(&self, t: f64) -> ProfilePoint {
        let pts = &self.points;
        if t <= pts[0].t {
            return ProfilePoint { t, ..pts[0] };
        }
        let last = pts[pts.len() - 1];
        if t >= last.t {
            return ProfilePoint { t, ..last };
        }
        // first knot strictly after t
        let i = pts.partition_point(|p| p.t <= t);
        let a = &pts[i - 1];
        if a.t == t {
            return *a;
        }
        ProfilePoint::lerp(a, &pts[i], t)
    }

    pub fn pressure_at(&self, t: f64) -> f64 {
        self.at(t).pressure
    }

    /// Largest absolute pressure slope over all segments, mbar/s.
    pub fn max_pressure_slope(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| ((w[1].pressure - w[0].pressure) / (w[1].t - w[0].t)).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ProfileError> {
        let mut wr = csv::Writer::from_writer(w);
        for p in &self.points {
            wr.serialize(p)?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory CSV");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }

    pub fn read_csv<R: Read>(name: impl Into<String>, r: R) -> Result<Self, ProfileError> {
        let mut rd = csv::Reader::from_reader(r);
        let points = rd.deserialize().collect::<Result<Vec<ProfilePoint>, _>>()?;
        Self::new(name, points)
    }
}

/// Free-function form of [`Profile::at`].
pub fn sample(profile: &Profile, t: f64) -> ProfilePoint {
    profile.at(t)
}
