use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Mutex, PoisonError};

use serde::{Deserialize, Serialize};

use crate::domain::{EventKind, OperatingMode, TcId, ValueMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AckStage {
    /// Queued (or refused) by the TC Receiver.
    Received,
    /// Processed by the TC Handler.
    Executed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AckStatus {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AckRecord {
    pub t_ms: u64,
    pub seq: u32,
    pub id: Option<TcId>,
    pub stage: AckStage,
    pub status: AckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t_ms: u64,
    pub kind: EventKind,
    #[serde(default)]
    pub payload: ValueMap,
    pub resulting_mode: OperatingMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub t_ms: u64,
    pub mode: OperatingMode,
    pub previous: OperatingMode,
    pub cause: String,
}

struct Inner<T> {
    entries: Vec<T>,
    sink: Option<BufWriter<File>>,
    write_errors: u64,
}

/// Append-only record log, optionally mirrored to a JSONL file.
pub struct Journal<T> {
    inner: Mutex<Inner<T>>,
}

impl<T> Default for Journal<T> {
    fn default() -> Self {
        Self {
            inner: Mutex::new(Inner {
                entries: Vec::new(),
                sink: None,
                write_errors: 0,
            }),
        }
    }
}

impl<T> std::fmt::Debug for Journal<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Journal")
            .field(
                "len",
                &self
                    .inner
                    .lock()
                    .unwrap_or_else(PoisonError::into_inner)
                    .entries
                    .len(),
            )
            .finish()
    }
}

impl<T: Serialize + Clone> Journal<T> {
    /// Mirrors future appends to `path`, truncating it.
    pub fn attach_file(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let f = File::create(path)?;
        self.inner
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .sink = Some(BufWriter::new(f));
        Ok(())
    }

    pub fn append(&self, rec: T) {
        let mut g = self.inner.lock().unwrap_or_else(PoisonError::into_inner);
        if let Some(w) = g.sink.as_mut() {
            let ok = serde_json::to_writer(&mut *w, &rec).is_ok() && w.write_all(b"\n").is_ok();
            if !ok {
                g.write_errors += 1;
            }
        }
        g.entries.push(rec);
    }

    pub fn len(&self) -> usize {
        self.inner
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .entries
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries from index `from` on.
    pub fn since(&self, from: usize) -> Vec<T> {
        let g = self.inner.lock().unwrap_or_else(PoisonError::into_inner);
        g.entries.get(from..).map(<[T]>::to_vec).unwrap_or_default()
    }

    pub fn all(&self) -> Vec<T> {
        self.since(0)
    }

    pub fn flush(&self) -> std::io::Result<()> {
        match self
            .inner
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .sink
            .as_mut()
        {
            Some(w) => w.flush(),
            None => Ok(()),
        }
    }

    pub fn write_errors(&self) -> u64 {
        self.inner
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .write_errors
    }
}
