//! Environment truth over mission time: pressure, ambient temperature and
//! position as piecewise-linear profiles.

mod atmosphere;
mod presets;
mod profile;

pub use atmosphere::{altitude_from_pressure, ambient_temp_c, isa_pressure_mbar};
pub use presets::{
    make_flight_profile, make_stationary_profile, make_tvac_profile, FlightProfileConfig,
    TvacParams,
};
pub use profile::{sample, Profile, ProfileError, ProfilePoint};

/// Latitude of the ground reference fix, degrees north.
pub const REFERENCE_LAT: f64 = 40.437699;
/// Longitude of the ground reference fix, degrees east.
pub const REFERENCE_LON: f64 = -3.672525;
pub const GROUND_PRESSURE_MBAR: f64 = 954.0;
