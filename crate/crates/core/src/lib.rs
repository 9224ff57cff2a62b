//! Onboard software for a stratospheric balloon gondola, running against a
//! simulated hardware layer.
//!
//! The crate is organised the way the flight software is layered:
//!
//! - [`domain`]: mission-wide types, the mode automaton and task-set analysis.
//! - [`envsim`]: environment truth (pressure, temperature, position) over time.
//! - [`halsim`]: simulated buses, GPIO/PWM, multiplexed ADCs and device models.
//! - [`datapool`]: protected latest-value cells and bounded FIFO queues.
//! - [`executor`]: fixed-priority cyclic/sporadic runtime, threaded or deterministic.
//! - [`subsystems`]: the measure/control/actuate task bodies.
//! - [`manager`]: telecommand and event handlers driving the mode automaton.
//! - [`ttc`]: frame codec, link state machine, TM/TC tasks and a headless ground station.
//! - [`verify`]: drift, percentage-error and MSE analytics plus run reports.
//! - [`mission`]: wires everything above into a runnable onboard system.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datapool;
pub mod domain;
pub mod envsim;
pub mod executor;
pub mod halsim;
pub mod manager;
pub mod mission;
pub mod subsystems;
pub mod time;
pub mod ttc;
pub mod verify;
