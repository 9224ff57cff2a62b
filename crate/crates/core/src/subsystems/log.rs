use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

/// Append-only CSV log of one subsystem's cycles.
pub struct TelemetryLog {
    w: csv::Writer<BufWriter<File>>,
    rows: u64,
}

impl std::fmt::Debug for TelemetryLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TelemetryLog")
            .field("rows", &self.rows)
            .finish()
    }
}

impl TelemetryLog {
    pub fn create(path: impl AsRef<Path>, header: &[&str]) -> std::io::Result<Self> {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        w.write_record(header)?;
        Ok(Self { w, rows: 0 })
    }

    /// Write failures are counted as silence: logging never fails a cycle.
    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        if self.w.write_record(fields).is_ok() {
            self.rows += 1;
        }
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.w.flush()
    }
}

impl Drop for TelemetryLog {
    fn drop(&mut self) {
        let _ = self.w.flush();
    }
}

pub(crate) fn f(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        String::new()
    }
}

pub(crate) fn t_s(now_ms: u64) -> String {
    format!("{:.3}", now_ms as f64 / 1000.0)
}
