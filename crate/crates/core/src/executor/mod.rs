//! Fixed-priority runtime for cyclic and sporadic tasks.
//!
//! Two engines share one log schema. The deterministic engine dispatches
//! jobs one at a time in virtual time by (priority desc, release asc, name
//! asc); bodies take no virtual time except where they await a delay. The
//! threaded engine runs one host thread per task against a scaled clock,
//! optionally under `SCHED_FIFO` on a single core.

mod ctx;
mod det;
mod rt;
mod threaded;
mod trace;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

pub use ctx::{body_fn, ActivationSource, FnBody, TaskBody, TaskCtx};
pub use trace::{
    read_activation_csv, read_trace, task_slug, write_activation_csv, ActivationRecord,
    TraceAction, TraceEvent, TraceSink,
};

use crate::domain::{validate_task_set, TaskKind, TaskSpec, ValidationReport};
use crate::time::{ns_to_ms_f64, SimClock, NS_PER_MS};

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("task `{0}` registered twice")]
    Duplicate(String),
    #[error("task `{task}`: {why}")]
    BadSpec { task: String, why: String },
    #[error("executor already ran")]
    AlreadyRan,
    #[error("no tasks registered")]
    Empty,
    #[error("{0} mode needs a {1} clock")]
    ClockMismatch(&'static str, &'static str),
    #[error("run duration must be positive")]
    BadDuration,
    #[error("trace output: {0}")]
    Io(#[from] std::io::Error),
    #[error("task `{0}` panicked")]
    TaskPanicked(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExecMode {
    Deterministic,
    Threaded,
}

#[derive(Debug, Clone, Default)]
pub struct ExecConfig {
    /// Stream the scheduling trace to this JSONL file.
    pub trace_path: Option<PathBuf>,
    /// Also return the trace in [`RunArtifacts::trace`].
    pub keep_trace: bool,
    /// Threaded mode: request `SCHED_FIFO` priorities and ceiling boosts.
    pub realtime: bool,
    /// Threaded mode: pin every task thread to this CPU.
    pub pin_cpu: Option<usize>,
}

pub(crate) struct Registered {
    pub spec: TaskSpec,
    pub body: Box<dyn TaskBody>,
    pub source: Option<Arc<dyn ActivationSource>>,
}

/// Statistics per task after a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TaskSummary {
    pub activations: u64,
    pub misses: u64,
    pub max_response_ms: f64,
}

#[derive(Debug, Default)]
pub struct RunArtifacts {
    pub mode: Option<ExecMode>,
    pub duration_s: f64,
    pub wall_s: f64,
    pub activations: BTreeMap<String, Vec<ActivationRecord>>,
    pub summary: BTreeMap<String, TaskSummary>,
    pub trace: Vec<TraceEvent>,
    pub trace_events: u64,
    pub validation: ValidationReport,
    /// Scheduling requests the host refused, e.g. `SCHED_FIFO` without
    /// privileges.
    pub platform_notes: Vec<String>,
}

impl RunArtifacts {
    pub fn misses(&self) -> u64 {
        self.summary.values().map(|s| s.misses).sum()
    }

    pub fn total_activations(&self) -> u64 {
        self.summary.values().map(|s| s.activations).sum()
    }

    /// Writes `<dir>/<task_slug>.csv` for every task.
    pub fn write_activation_logs(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (task, recs) in &self.activations {
            write_activation_csv(dir.join(format!("{}.csv", task_slug(task))), recs)?;
        }
        Ok(())
    }
}

/// Per-task bookkeeping shared by both engines.
#[derive(Debug)]
pub(crate) struct Ledger {
    kind: TaskKind,
    name: String,
    period_ns: u64,
    deadline_ns: u64,
    first_start: Option<u64>,
    pub records: Vec<ActivationRecord>,
    pub summary: TaskSummary,
}

impl Ledger {
    pub fn new(spec: &TaskSpec) -> Self {
        Self {
            kind: spec.kind,
            name: spec.name.clone(),
            period_ns: spec.period_or_miat_ms * NS_PER_MS,
            deadline_ns: spec.deadline_ms * NS_PER_MS,
            first_start: None,
            records: Vec::new(),
            summary: TaskSummary::default(),
        }
    }

    /// Logs one completed activation; returns whether it met its deadline.
    pub fn complete(&mut self, n: u64, release_ns: u64, start_ns: u64, end_ns: u64) -> bool {
        let first = *self.first_start.get_or_insert(start_ns);
        let theoretical = match self.kind {
            TaskKind::Cyclic => first + n * self.period_ns,
            TaskKind::Sporadic => release_ns,
        };
        let met = end_ns <= release_ns + self.deadline_ns;
        let theoretical_ms = ns_to_ms_f64(theoretical);
        let actual_ms = ns_to_ms_f64(start_ns);
        self.records.push(ActivationRecord {
            task: self.name.clone(),
            n,
            theoretical_ms,
            actual_ms,
            drift_ms: theoretical_ms - actual_ms,
            deadline_met: met,
        });
        self.summary.activations += 1;
        if !met {
            self.summary.misses += 1;
        }
        self.summary.max_response_ms = self
            .summary
            .max_response_ms
            .max(ns_to_ms_f64(end_ns - release_ns));
        met
    }
}

pub struct Executor {
    clock: SimClock,
    cfg: ExecConfig,
    tasks: Vec<Registered>,
    ran: bool,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field(
                "tasks",
                &self.tasks.iter().map(|t| &t.spec.name).collect::<Vec<_>>(),
            )
            .field("ran", &self.ran)
            .finish()
    }
}

impl Executor {
    pub fn new(clock: SimClock, cfg: ExecConfig) -> Self {
        Self {
            clock,
            cfg,
            tasks: Vec::new(),
            ran: false,
        }
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn specs(&self) -> Vec<TaskSpec> {
        self.tasks.iter().map(|t| t.spec.clone()).collect()
    }

    fn check(&self, spec: &TaskSpec, kind: TaskKind) -> Result<(), ExecError> {
        if self.ran {
            return Err(ExecError::AlreadyRan);
        }
        let bad = |why: &str| ExecError::BadSpec {
            task: spec.name.clone(),
            why: why.into(),
        };
        if spec.kind != kind {
            return Err(bad(&format!("expected a {kind:?} task")));
        }
        if spec.period_or_miat_ms == 0 {
            return Err(bad("period/MIAT must be positive"));
        }
        if spec.deadline_ms == 0 {
            return Err(bad("deadline must be positive"));
        }
        if self.tasks.iter().any(|t| t.spec.name == spec.name) {
            return Err(ExecError::Duplicate(spec.name.clone()));
        }
        Ok(())
    }

    pub fn register_cyclic(
        &mut self,
        spec: TaskSpec,
        body: Box<dyn TaskBody>,
    ) -> Result<(), ExecError> {
        self.check(&spec, TaskKind::Cyclic)?;
        self.tasks.push(Registered {
            spec,
            body,
            source: None,
        });
        Ok(())
    }

    pub fn register_sporadic(
        &mut self,
        spec: TaskSpec,
        source: Arc<dyn ActivationSource>,
        body: Box<dyn TaskBody>,
    ) -> Result<(), ExecError> {
        self.check(&spec, TaskKind::Sporadic)?;
        self.tasks.push(Registered {
            spec,
            body,
            source: Some(source),
        });
        Ok(())
    }

    /// Runs every registered task for `duration_s` of mission time.
    pub fn run(&mut self, duration_s: f64, mode: ExecMode) -> Result<RunArtifacts, ExecError> {
        if self.ran {
            return Err(ExecError::AlreadyRan);
        }
        if !(duration_s > 0.0 && duration_s.is_finite()) {
            return Err(ExecError::BadDuration);
        }
        if self.tasks.is_empty() {
            return Err(ExecError::Empty);
        }
        match (mode, self.clock.is_virtual()) {
            (ExecMode::Deterministic, false) => {
                return Err(ExecError::ClockMismatch("deterministic", "virtual"))
            }
            (ExecMode::Threaded, true) => {
                return Err(ExecError::ClockMismatch("threaded", "scaled"))
            }
            _ => {}
        }
        self.ran = true;
        let specs = self.specs();
        let validation = validate_task_set(&specs).unwrap_or_default();
        let sink = TraceSink::new(self.cfg.trace_path.as_deref(), self.cfg.keep_trace)?;
        let end_ns = crate::time::secs_to_ns(duration_s);
        let tasks = std::mem::take(&mut self.tasks);
        let wall = std::time::Instant::now();
        let (ledgers, notes) = match mode {
            ExecMode::Deterministic => (det::run(&self.clock, tasks, end_ns, &sink)?, Vec::new()),
            ExecMode::Threaded => threaded::run(&self.clock, tasks, end_ns, &sink, &self.cfg)?,
        };
        let trace = sink.finish()?;
        let mut art = RunArtifacts {
            mode: Some(mode),
            duration_s,
            wall_s: wall.elapsed().as_secs_f64(),
            trace_events: sink.count(),
            trace,
            validation,
            platform_notes: notes,
            ..RunArtifacts::default()
        };
        for l in ledgers {
            art.summary.insert(l.name.clone(), l.summary);
            art.activations.insert(l.name, l.records);
        }
        Ok(art)
    }
}
