use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;
use std::sync::{Mutex, PoisonError};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceAction {
    Release,
    Start,
    Block,
    Unblock,
    End,
    Miss,
}

/// One scheduling event; `t` is mission time in ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: f64,
    pub task: String,
    pub action: TraceAction,
}

#[derive(Default)]
struct SinkInner {
    file: Option<BufWriter<File>>,
    kept: Option<Vec<TraceEvent>>,
    count: u64,
}

/// Destination of scheduling events: a JSONL file, memory, both or neither.
#[derive(Default)]
pub struct TraceSink {
    inner: Mutex<SinkInner>,
}

impl std::fmt::Debug for TraceSink {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TraceSink")
            .field("count", &self.count())
            .finish()
    }
}

impl TraceSink {
    pub fn new(path: Option<&Path>, keep: bool) -> io::Result<Self> {
        let file = path.map(File::create).transpose()?.map(BufWriter::new);
        Ok(Self {
            inner: Mutex::new(SinkInner {
                file,
                kept: keep.then(Vec::new),
                count: 0,
            }),
        })
    }

    pub fn is_active(&self) -> bool {
        let g = self.lock();
        g.file.is_some() || g.kept.is_some()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, SinkInner> {
        self.inner.lock().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn emit(&self, t_ns: u64, task: &str, action: TraceAction) {
        let mut g = self.lock();
        if g.file.is_none() && g.kept.is_none() {
            return;
        }
        let ev = TraceEvent {
            t: t_ns as f64 / 1e6,
            task: task.to_owned(),
            action,
        };
        if let Some(w) = g.file.as_mut() {
            let _ = serde_json::to_writer(&mut *w, &ev);
            let _ = w.write_all(b"\n");
        }
        if let Some(k) = g.kept.as_mut() {
            k.push(ev);
        }
        g.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.lock().count
    }

    pub(crate) fn finish(&self) -> io::Result<Vec<TraceEvent>> {
        let mut g = self.lock();
        if let Some(w) = g.file.as_mut() {
            w.flush()?;
        }
        Ok(g.kept.take().unwrap_or_default())
    }
}

pub fn read_trace(path: impl AsRef<Path>) -> io::Result<Vec<TraceEvent>> {
    let f = io::BufReader::new(File::open(path)?);
    f.lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| serde_json::from_str(&l?).map_err(io::Error::other))
        .collect()
}

/// Timing of one activation. Times are mission ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationRecord {
    #[serde(skip)]
    pub task: String,
    pub n: u64,
    /// For cyclic tasks the first actual start plus `n` periods; for
    /// sporadic tasks the release.
    pub theoretical_ms: f64,
    pub actual_ms: f64,
    pub drift_ms: f64,
    pub deadline_met: bool,
}

pub fn write_activation_csv(
    path: impl AsRef<Path>,
    records: &[ActivationRecord],
) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()
}

pub fn read_activation_csv(path: impl AsRef<Path>) -> io::Result<Vec<ActivationRecord>> {
    let path = path.as_ref();
    let task = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut rd = csv::Reader::from_path(path)?;
    rd.deserialize::<ActivationRecord>()
        .map(|r| {
            r.map(|mut r| {
                r.task = task.clone();
                r
            })
            .map_err(io::Error::other)
        })
        .collect()
}

/// File-name form of a task name: "IMU Measurer" -> "imu_measurer".
pub fn task_slug(name: &str) -> String {
    name.to_ascii_lowercase()
        .replace(|c: char| !c.is_ascii_alphanumeric(), "_")
}
