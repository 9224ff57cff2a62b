use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Small key/value payload carried by events and telecommands.
pub type ValueMap = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    FloatDetected,
    CutoffDetected,
    LinkLost,
    LinkRestored,
    /// Environmental stimulus from the SDPU detectors that is neither a float
    /// nor a cut-off detection: threshold crossings and the float-2 timer.
    PressureAnomaly,
    OperatorInjected,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::FloatDetected,
        EventKind::CutoffDetected,
        EventKind::LinkLost,
        EventKind::LinkRestored,
        EventKind::PressureAnomaly,
        EventKind::OperatorInjected,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::FloatDetected => "FloatDetected",
            EventKind::CutoffDetected => "CutoffDetected",
            EventKind::LinkLost => "LinkLost",
            EventKind::LinkRestored => "LinkRestored",
            EventKind::PressureAnomaly => "PressureAnomaly",
            EventKind::OperatorInjected => "OperatorInjected",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown event kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub timestamp_ms: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub payload: ValueMap,
}

impl Event {
    pub fn new(kind: EventKind, timestamp_ms: u64) -> Self {
        Self {
            kind,
            timestamp_ms,
            payload: ValueMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.payload.insert(key.to_owned(), value.into());
        self
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        self.payload.get(key).and_then(serde_json::Value::as_f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TcId {
    SetMode,
    SetAuthority,
    SetHeater,
    PowerSwitch,
    CalibrateImu,
    SetTmRate,
    InjectEvent,
    Ping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telecommand {
    pub id: TcId,
    pub seq: u32,
    #[serde(default)]
    pub args: ValueMap,
}

impl Telecommand {
    pub fn new(id: TcId, seq: u32) -> Self {
        Self {
            id,
            seq,
            args: ValueMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.args.insert(key.to_owned(), value.into());
        self
    }

    pub fn arg_str(&self, key: &str) -> Option<&str> {
        self.args.get(key).and_then(serde_json::Value::as_str)
    }

    pub fn arg_f64(&self, key: &str) -> Option<f64> {
        self.args.get(key).and_then(serde_json::Value::as_f64)
    }

    pub fn arg_u64(&self, key: &str) -> Option<u64> {
        self.args.get(key).and_then(serde_json::Value::as_u64)
    }

    pub fn arg_bool(&self, key: &str) -> Option<bool> {
        self.args.get(key).and_then(serde_json::Value::as_bool)
    }
}
