//! Mission-wide types and pure decision functions.

mod config;
mod message;
mod mode;
pub mod state;
mod tasks;

pub use config::{ConfigError, HeaterConfig, MissionConfig, TmConfig};
pub use message::{Event, EventKind, TcId, Telecommand, ValueMap};
pub use mode::{mode_transition, ControlAuthority, OperatingMode, Rejection, Stimulus, Transition};
pub use tasks::{
    compute_ceilings, names, validate_task_set, CeilingError, Ceilings, ObjectId, TaskKind,
    TaskSet, TaskSetError, TaskSpec, ValidationIssue, ValidationReport,
};
