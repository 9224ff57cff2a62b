//! Verification analytics: record-time drift, percentage error and mean
//! squared error, the shipped reference data, and the run report.

mod fixtures;
mod metrics;
mod report;

use std::path::Path;

use thiserror::Error;

pub use fixtures::{
    bench_rate, check_rows, embedded, load_measured, run_bench, table_mse, BenchReading, BenchRun,
    ReferenceRow, ReferenceTable, RowCheck,
};
pub use metrics::{
    drift_indexed, drift_of_activations, drift_stats, mse, pct_error, DriftStats, ErrorStats,
};
pub use report::{acceptance_report, matches_printed, Report, Status, Verdict};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("need at least 2 log entries, got {0}")]
    TooFewEntries(usize),
    #[error("period must be positive, got {0}")]
    BadPeriod(f64),
    #[error("percentage error undefined for theoretical value {0}")]
    UndefinedError(f64),
    #[error("no data")]
    Empty,
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Hal(#[from] crate::halsim::HalError),
}

/// Reads `(index, time s)` entries from a log. Accepted forms: an
/// activation CSV (`n`, `actual_ms`), a telemetry CSV (`t_s` first
/// column), or JSON lines carrying `t_ms`.
pub fn load_log_times(path: impl AsRef<Path>) -> Result<Vec<(u64, f64)>, VerifyError> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "jsonl") {
        let lines = crate::ttc::read_jsonl(path)?;
        return lines
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.get("t_ms")
                    .and_then(serde_json::Value::as_f64)
                    .map(|t| (i as u64, t / 1000.0))
                    .ok_or_else(|| VerifyError::Parse(format!("line {}: no `t_ms`", i + 1)))
            })
            .collect();
    }
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let h = rd.headers()?.clone();
    let col = |name: &str| h.iter().position(|c| c == name);
    let (ni, ti, scale) = match (col("n"), col("actual_ms"), col("t_s")) {
        (Some(n), Some(t), _) => (Some(n), t, 1e-3),
        (_, _, Some(t)) => (None, t, 1.0),
        _ => {
            return Err(VerifyError::Parse(
                "log needs `n,actual_ms` or `t_s` columns".into(),
            ))
        }
    };
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let t: f64 = rec[ti]
            .parse()
            .map_err(|_| VerifyError::Parse(format!("row {}: bad time", i + 1)))?;
        let n = match ni {
            Some(c) => rec[c]
                .parse()
                .map_err(|_| VerifyError::Parse(format!("row {}: bad n", i + 1)))?,
            None => i as u64,
        };
        out.push((n, t * scale));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_forms() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("imu_measurer.csv");
        std::fs::write(
            &a,
            "n,theoretical_ms,actual_ms,drift_ms,deadline_met\n0,0,0,0,true\n2,20,21,-1,true\n",
        )
        .unwrap();
        assert_eq!(load_log_times(&a).unwrap(), vec![(0, 0.0), (2, 0.021)]);
        let b = dir.path().join("el.csv");
        std::fs::write(&b, "t_s,p\n1.000,3\n2.000,4\n").unwrap();
        assert_eq!(load_log_times(&b).unwrap(), vec![(0, 1.0), (1, 2.0)]);
        let c = dir.path().join("tm_sc.jsonl");
        std::fs::write(&c, "{\"t_ms\":0}\n{\"t_ms\":1000}\n").unwrap();
        assert_eq!(load_log_times(&c).unwrap(), vec![(0, 0.0), (1, 1.0)]);
        let bad = dir.path().join("x.csv");
        std::fs::write(&bad, "a,b\n1,2\n").unwrap();
        assert!(load_log_times(&bad).is_err());
    }
}
