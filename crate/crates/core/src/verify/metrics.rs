use serde::Serialize;

use super::VerifyError;
use crate::executor::ActivationRecord;

/// Record-time drift of one log against its nominal period, seconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftStats {
    pub task: String,
    pub avg_drift: f64,
    pub max_drift: f64,
    pub n: usize,
}

/// Drift of `(index, record time s)` pairs: the theoretical time of entry
/// `i` is the first entry's time plus `(index_i - index_0)` periods.
pub fn drift_indexed(
    task: &str,
    entries: &[(u64, f64)],
    period_s: f64,
) -> Result<DriftStats, VerifyError> {
    if entries.len() < 2 {
        return Err(VerifyError::TooFewEntries(entries.len()));
    }
    if !(period_s > 0.0 && period_s.is_finite()) {
        return Err(VerifyError::BadPeriod(period_s));
    }
    let (n0, ar0) = entries[0];
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for &(n, ar) in entries {
        let tr = ar0 + (n - n0) as f64 * period_s;
        let d = (tr - ar).abs();
        sum += d;
        max = max.max(d);
    }
    Ok(DriftStats {
        task: task.to_owned(),
        avg_drift: sum / entries.len() as f64,
        max_drift: max,
        n: entries.len(),
    })
}

/// Drift of consecutive record times.
pub fn drift_stats(task: &str, times_s: &[f64], period_s: f64) -> Result<DriftStats, VerifyError> {
    let e: Vec<(u64, f64)> = times_s
        .iter()
        .enumerate()
        .map(|(i, t)| (i as u64, *t))
        .collect();
    drift_indexed(task, &e, period_s)
}

/// Drift of an activation log, using each record's activation index.
/// Computed in milliseconds, where the log is exact, then reported in s.
pub fn drift_of_activations(
    task: &str,
    recs: &[ActivationRecord],
    period_s: f64,
) -> Result<DriftStats, VerifyError> {
    let e: Vec<(u64, f64)> = recs.iter().map(|r| (r.n, r.actual_ms)).collect();
    let ms = drift_indexed(task, &e, period_s * 1000.0)?;
    Ok(DriftStats {
        avg_drift: ms.avg_drift / 1000.0,
        max_drift: ms.max_drift / 1000.0,
        ..ms
    })
}

/// `|tv - av| / tv * 100`, with `tv` as the denominator even when small.
pub fn pct_error(tv: f64, av: f64) -> Result<f64, VerifyError> {
    if tv == 0.0 || !tv.is_finite() || !av.is_finite() {
        return Err(VerifyError::UndefinedError(tv));
    }
    Ok((tv - av).abs() / tv.abs() * 100.0)
}

/// Mean of `(tv - av)^2` over all pairs.
pub fn mse(pairs: &[(f64, f64)]) -> Result<f64, VerifyError> {
    if pairs.is_empty() {
        return Err(VerifyError::Empty);
    }
    Ok(pairs.iter().map(|(t, a)| (t - a) * (t - a)).sum::<f64>() / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorStats {
    pub pairs: Vec<(f64, f64)>,
    pub errors_pct: Vec<f64>,
    pub mse: f64,
}

impl ErrorStats {
    pub fn compute(pairs: Vec<(f64, f64)>) -> Result<Self, VerifyError> {
        let errors_pct = pairs
            .iter()
            .map(|(t, a)| pct_error(*t, *a))
            .collect::<Result<_, _>>()?;
        let mse = mse(&pairs)?;
        Ok(Self {
            pairs,
            errors_pct,
            mse,
        })
    }
}
