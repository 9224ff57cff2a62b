use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use super::metrics::{mse, pct_error};
use super::VerifyError;
use crate::envsim::{make_stationary_profile, REFERENCE_LAT, REFERENCE_LON};
use crate::halsim::adc::{DataRate, LSB_V};
use crate::halsim::{drivers, Hal, HalConfig, MuxId, Rtu, TestBenchFixture};
use crate::time::SimClock;

/// Reference data shipped with the crate.
pub mod embedded {
    pub const TMU_REFERENCE: &str = include_str!("../../fixtures/reference/tmu_reference.csv");
    pub const SDPU_REFERENCE: &str = include_str!("../../fixtures/reference/sdpu_reference.csv");
    pub const PCU_REFERENCE: &str = include_str!("../../fixtures/reference/pcu_reference.csv");
    pub const DRIFT_REFERENCE: &str = include_str!("../../fixtures/reference/drift_reference.csv");
    pub const TMU_BENCH: &str = include_str!("../../fixtures/reference/tmu_bench.csv");
    pub const SDPU_BENCH: &str = include_str!("../../fixtures/reference/sdpu_bench.csv");
}

const NUMERIC: [&str; 3] = ["theoretical", "actual", "printed_error_pct"];

/// One published (theoretical, actual, error) row; `key` holds the
/// remaining columns in file order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub key: Vec<String>,
    pub theoretical: f64,
    pub actual: f64,
    pub printed_error_pct: f64,
}

impl ReferenceRow {
    pub fn label(&self) -> String {
        self.key.join("/")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceTable {
    pub key_columns: Vec<String>,
    pub rows: Vec<ReferenceRow>,
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn num(s: &str, col: &str) -> Result<f64, VerifyError> {
    s.parse()
        .map_err(|_| VerifyError::Parse(format!("column `{col}`: `{s}` is not a number")))
}

impl ReferenceTable {
    pub fn from_csv<R: Read>(r: R) -> Result<Self, VerifyError> {
        let mut rd = reader(r);
        let headers = rd.headers()?.clone();
        let idx = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| VerifyError::Parse(format!("missing column `{name}`")))
        };
        let (it, ia, ie) = (idx(NUMERIC[0])?, idx(NUMERIC[1])?, idx(NUMERIC[2])?);
        let key_idx: Vec<usize> = (0..headers.len())
            .filter(|i| ![it, ia, ie].contains(i))
            .collect();
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            rows.push(ReferenceRow {
                key: key_idx.iter().map(|&i| rec[i].to_owned()).collect(),
                theoretical: num(&rec[it], NUMERIC[0])?,
                actual: num(&rec[ia], NUMERIC[1])?,
                printed_error_pct: num(&rec[ie], NUMERIC[2])?,
            });
        }
        if rows.is_empty() {
            return Err(VerifyError::Empty);
        }
        Ok(Self {
            key_columns: key_idx.iter().map(|&i| headers[i].to_owned()).collect(),
            rows,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VerifyError> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .map(|r| (r.theoretical, r.actual))
            .collect()
    }

    /// Pairs the theoretical column with `measured` values matched by key;
    /// repeated keys match in order of appearance.
    pub fn pairs_with(
        &self,
        measured: &[(Vec<String>, f64)],
    ) -> Result<Vec<(f64, f64)>, VerifyError> {
        let mut pools: BTreeMap<&[String], Vec<f64>> = BTreeMap::new();
        for (k, v) in measured.iter().rev() {
            pools.entry(k.as_slice()).or_default().push(*v);
        }
        self.rows
            .iter()
            .map(|r| {
                pools
                    .get_mut(r.key.as_slice())
                    .and_then(Vec::pop)
                    .map(|av| (r.theoretical, av))
                    .ok_or_else(|| VerifyError::Parse(format!("no measurement for {}", r.label())))
            })
            .collect()
    }
}

/// Reads `key columns..., value` CSV for [`ReferenceTable::pairs_with`]:
/// every column but the last forms the key. The value column may be named
/// `actual`, `measured` or `volts`; other columns named `origin` are ignored.
pub fn load_measured<R: Read>(r: R) -> Result<Vec<(Vec<String>, f64)>, VerifyError> {
    let mut rd = reader(r);
    let headers = rd.headers()?.clone();
    let vi = headers
        .iter()
        .position(|h| matches!(h, "actual" | "measured" | "volts"))
        .ok_or_else(|| {
            VerifyError::Parse(
                "measured file needs an `actual`, `measured` or `volts` column".into(),
            )
        })?;
    let skip =
        |i: usize| i == vi || matches!(&headers[i], "origin" | "theoretical" | "printed_error_pct");
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let key = (0..rec.len())
            .filter(|i| !skip(*i))
            .map(|i| rec[i].to_owned())
            .collect();
        out.push((key, num(&rec[vi], &headers[vi])?));
    }
    Ok(out)
}

/// Recomputed error of one published row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowCheck {
    pub label: String,
    pub computed_pct: f64,
    pub printed_pct: f64,
    /// Agreement at four decimals.
    pub matches: bool,
}

pub fn check_rows(table: &ReferenceTable) -> Result<Vec<RowCheck>, VerifyError> {
    table
        .rows
        .iter()
        .map(|r| {
            let e = pct_error(r.theoretical, r.actual)?;
            Ok(RowCheck {
                label: r.label(),
                computed_pct: e,
                printed_pct: r.printed_error_pct,
                matches: ((e * 1e4).round() - (r.printed_error_pct * 1e4).round()).abs() < 0.5,
            })
        })
        .collect()
}

pub fn table_mse(table: &ReferenceTable) -> Result<f64, VerifyError> {
    mse(&table.pairs())
}

/// One bench row read back through the simulated acquisition chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReading {
    pub mux: u8,
    pub channel: u8,
    pub fixture_v: f64,
    pub measured_v: f64,
}

impl BenchReading {
    pub fn within_one_lsb(&self) -> bool {
        (self.measured_v - self.fixture_v).abs() <= LSB_V
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRun {
    pub readings: Vec<BenchReading>,
    pub simulated_ms: f64,
}

/// Flight data rate of each RTU's converter.
pub fn bench_rate(rtu: Rtu) -> DataRate {
    match rtu {
        Rtu::Tmu => DataRate::Sps8,
        Rtu::Sdpu => DataRate::Sps128,
    }
}

/// Acquires every fixture row on a fresh simulated `rtu`, one pass per
/// repeated channel.
pub fn run_bench(rtu: Rtu, fixture: &TestBenchFixture) -> Result<BenchRun, VerifyError> {
    let clock = SimClock::new_virtual();
    let profile = make_stationary_profile(954.0, REFERENCE_LAT, REFERENCE_LON, 1e6)
        .map_err(|e| VerifyError::Parse(e.to_string()))?;
    let hal = Hal::new(clock.clone(), profile, HalConfig::default());
    let rail = match rtu {
        Rtu::Tmu => 0,
        Rtu::Sdpu => 1,
    };
    hal.set_power(rail, true)?;
    drivers::adc_configure(&hal, rtu, bench_rate(rtu))?;
    let t0 = clock.now_ns();
    let mut by_key: BTreeMap<(u8, u8), Vec<f64>> = BTreeMap::new();
    for pass in fixture.passes() {
        hal.load_testbench_pass(rtu, pass.clone());
        for &(mux, ch) in pass.keys() {
            let v = crate::time::block_on(drivers::acquire_volts(
                &hal,
                &clock,
                MuxId::new(rtu, mux),
                ch,
            ))?;
            by_key.entry((mux, ch)).or_default().push(v);
        }
    }
    hal.clear_testbench(rtu);
    // report in fixture order
    let mut taken: BTreeMap<(u8, u8), usize> = BTreeMap::new();
    let readings = fixture
        .rows
        .iter()
        .map(|r| {
            let k = (r.mux, r.channel);
            let i = taken.entry(k).or_default();
            let v = by_key[&k][*i];
            *i += 1;
            BenchReading {
                mux: r.mux,
                channel: r.channel,
                fixture_v: r.volts,
                measured_v: v,
            }
        })
        .collect();
    Ok(BenchRun {
        readings,
        simulated_ms: (clock.now_ns() - t0) as f64 / 1e6,
    })
}
