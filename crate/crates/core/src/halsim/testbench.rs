//! Fixed-voltage bench fixtures for the multiplexed acquisition chain.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adc::FULL_SCALE_V;
use super::HalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureRow {
    pub mux: u8,
    pub channel: u8,
    pub volts: f64,
}

/// Rows in file order. The same (mux, channel) may appear more than once;
/// each occurrence is a separate acquisition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TestBenchFixture {
    pub rows: Vec<FixtureRow>,
}

impl TestBenchFixture {
    pub fn new(rows: Vec<FixtureRow>) -> Result<Self, HalError> {
        for r in &rows {
            if r.channel > 7 {
                return Err(HalError::Range(format!(
                    "fixture channel {} > 7",
                    r.channel
                )));
            }
            if !(r.volts.abs() <= FULL_SCALE_V) {
                return Err(HalError::Range(format!(
                    "fixture voltage {} V outside ±{FULL_SCALE_V} V",
                    r.volts
                )));
            }
        }
        Ok(Self { rows })
    }

    /// Reads `mux,channel,volts` CSV; lines starting with `#` are comments.
    pub fn from_csv<R: Read>(r: R) -> Result<Self, HalError> {
        let mut rd = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        let rows = rd
            .deserialize()
            .collect::<Result<Vec<FixtureRow>, _>>()
            .map_err(|e| HalError::Model(format!("fixture CSV: {e}")))?;
        Self::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HalError> {
        let f = std::fs::File::open(path.as_ref()).map_err(|e| HalError::Model(e.to_string()))?;
        Self::from_csv(f)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Splits the rows into duplicate-free maps. The n-th occurrence of a key
    /// goes into pass n, so loading each pass in turn acquires every row
    /// exactly once.
    pub fn passes(&self) -> Vec<BTreeMap<(u8, u8), f64>> {
        let mut passes: Vec<BTreeMap<(u8, u8), f64>> = Vec::new();
        for r in &self.rows {
            let key = (r.mux, r.channel);
            match passes.iter_mut().find(|p| !p.contains_key(&key)) {
                Some(p) => {
                    p.insert(key, r.volts);
                }
                None => passes.push(BTreeMap::from([(key, r.volts)])),
            }
        }
        passes
    }
}
