//! Shared state between tasks: latest-value cells, bounded FIFO queues, and
//! append-only journals for events, acknowledgements and mode changes.
//!
//! Every cell and queue is registered at construction with the ceiling
//! computed from the task set; the registry is closed afterwards.

mod cell;
mod journal;
mod queue;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub use cell::{
    clear_ceiling_hook, install_ceiling_hook, locks_held, Caller, CeilingHook, ProtectedCell,
    Stamped,
};
pub use journal::{AckRecord, AckStage, AckStatus, EventRecord, Journal, ModeRecord};
pub use queue::{BoundedQueue, PutResult, QueueStats};

use crate::domain::state::*;
use crate::domain::{
    compute_ceilings, CeilingError, Ceilings, Event, MissionConfig, ObjectId, OperatingMode,
    TaskSpec, Telecommand,
};
use crate::time::SimClock;

#[derive(Debug, Error, PartialEq)]
pub enum PoolError {
    #[error(transparent)]
    Ceiling(#[from] CeilingError),
    #[error("no protected object named `{0}`")]
    UnknownObject(String),
}

/// The five per-subsystem mode cells in propagation order.
pub const MODE_CELLS: [ObjectId; 5] = [
    ObjectId::NADS_MODE,
    ObjectId::HTL_MODE,
    ObjectId::SDPU_MODE,
    ObjectId::PCU_MODE,
    ObjectId::TTC_MODE,
];

#[derive(Debug)]
pub struct DataPool {
    pub nads: ProtectedCell<NadsState>,
    pub htl: ProtectedCell<HtlState>,
    pub el: ProtectedCell<ElState>,
    pub pcu: ProtectedCell<PcuState>,
    pub atl: ProtectedCell<AtlState>,

    pub nads_mode: ProtectedCell<OperatingMode>,
    pub htl_mode: ProtectedCell<OperatingMode>,
    pub sdpu_mode: ProtectedCell<OperatingMode>,
    pub pcu_mode: ProtectedCell<OperatingMode>,
    pub ttc_mode: ProtectedCell<OperatingMode>,
    pub ttc_tm_mode: ProtectedCell<TmMode>,

    pub htl_ctrlr: ProtectedCell<HtlControl>,
    pub el_ctrlr: ProtectedCell<ElControl>,
    pub sdpu_ctrlr: ProtectedCell<SdpuControl>,
    pub htl_dev: ProtectedCell<Option<DeviceCommand>>,
    pub nads_dev: ProtectedCell<NadsDev>,
    pub sdpu_dev: ProtectedCell<Option<DeviceCommand>>,
    pub pcu_dev: ProtectedCell<PcuDev>,

    pub tc_queue: BoundedQueue<Telecommand>,
    pub event_queue: BoundedQueue<Event>,

    pub events: Journal<EventRecord>,
    pub acks: Journal<AckRecord>,
    pub modes: Journal<ModeRecord>,

    ceilings: Ceilings,
    clock: SimClock,
}

impl DataPool {
    pub fn new(
        clock: SimClock,
        tasks: &[TaskSpec],
        cfg: &MissionConfig,
    ) -> Result<Self, PoolError> {
        let ceilings = compute_ceilings(tasks, &ObjectId::ALL)?;
        let c = |id: ObjectId| {
            ceilings
                .get(&id)
                .expect("registry closed over every object")
        };
        macro_rules! cell {
            ($id:expr, $init:expr) => {
                ProtectedCell::new($id, c($id), clock.clone(), $init)
            };
        }
        let tm = TmMode {
            sc_divider: (cfg.tm.sc_period_ms / 1000).max(1) as u32,
            hk_divider: (cfg.tm.hk_period_ms / 1000).max(1) as u32,
        };
        Ok(Self {
            nads: cell!(ObjectId::DP_NADS, NadsState::default()),
            htl: cell!(ObjectId::DP_HTL, HtlState::default()),
            el: cell!(ObjectId::DP_EL, ElState::default()),
            pcu: cell!(
                ObjectId::DP_PCU,
                PcuState {
                    stale: true,
                    ..PcuState::default()
                }
            ),
            atl: cell!(ObjectId::DP_ATL, AtlState::default()),
            nads_mode: cell!(ObjectId::NADS_MODE, OperatingMode::PreLaunch),
            htl_mode: cell!(ObjectId::HTL_MODE, OperatingMode::PreLaunch),
            sdpu_mode: cell!(ObjectId::SDPU_MODE, OperatingMode::PreLaunch),
            pcu_mode: cell!(ObjectId::PCU_MODE, OperatingMode::PreLaunch),
            ttc_mode: cell!(ObjectId::TTC_MODE, OperatingMode::PreLaunch),
            ttc_tm_mode: cell!(ObjectId::TTC_TM_MODE, tm),
            htl_ctrlr: cell!(ObjectId::HTL_CTRLR, HtlControl::default()),
            el_ctrlr: cell!(ObjectId::EL_CTRLR, ElControl::default()),
            sdpu_ctrlr: cell!(ObjectId::SDPU_CTRLR, SdpuControl::default()),
            htl_dev: cell!(ObjectId::HTL_DEV, None),
            nads_dev: cell!(ObjectId::NADS_DEV, NadsDev::default()),
            sdpu_dev: cell!(ObjectId::SDPU_DEV, None),
            pcu_dev: cell!(ObjectId::PCU_DEV, PcuDev::default()),
            tc_queue: BoundedQueue::new(
                ObjectId::TC_QUEUE,
                c(ObjectId::TC_QUEUE),
                cfg.tc_queue_capacity,
            ),
            event_queue: BoundedQueue::new(
                ObjectId::EVENT_QUEUE,
                c(ObjectId::EVENT_QUEUE),
                cfg.event_queue_capacity,
            ),
            events: Journal::default(),
            acks: Journal::default(),
            modes: Journal::default(),
            ceilings,
            clock,
        })
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn ceilings(&self) -> &Ceilings {
        &self.ceilings
    }

    /// Registered objects with their ceilings, in registry order.
    pub fn registry(&self) -> Vec<(ObjectId, u8)> {
        ObjectId::ALL
            .iter()
            .map(|o| (o.clone(), self.ceilings.get(o).unwrap_or(0)))
            .collect()
    }

    pub fn mode_cell(&self, id: &ObjectId) -> Option<&ProtectedCell<OperatingMode>> {
        [
            &self.nads_mode,
            &self.htl_mode,
            &self.sdpu_mode,
            &self.pcu_mode,
            &self.ttc_mode,
        ]
        .into_iter()
        .find(|c| c.id() == id)
    }

    /// Dump of one object by name.
    pub fn snapshot_of(&self, name: &str) -> Result<Value, PoolError> {
        self.snapshot()
            .get(name)
            .cloned()
            .ok_or_else(|| PoolError::UnknownObject(name.to_owned()))
    }

    /// Every cell as `{value, timestamp_ms, write_count}` and every queue as
    /// its statistics plus pending entries, keyed by object name.
    pub fn snapshot(&self) -> Value {
        fn cell<V: Clone + Serialize>(c: &ProtectedCell<V>) -> (String, Value) {
            let s = c.read(&Caller::system());
            (
                c.id().to_string(),
                serde_json::to_value(s).unwrap_or(Value::Null),
            )
        }
        fn queue<M: Clone + Serialize>(q: &BoundedQueue<M>) -> (String, Value) {
            (
                q.id().to_string(),
                json!({ "stats": q.stats(), "entries": q.peek_all() }),
            )
        }
        let entries = [
            cell(&self.nads),
            cell(&self.htl),
            cell(&self.el),
            cell(&self.pcu),
            cell(&self.atl),
            cell(&self.nads_mode),
            cell(&self.htl_mode),
            cell(&self.sdpu_mode),
            cell(&self.pcu_mode),
            cell(&self.ttc_mode),
            cell(&self.ttc_tm_mode),
            cell(&self.htl_ctrlr),
            cell(&self.el_ctrlr),
            cell(&self.sdpu_ctrlr),
            cell(&self.htl_dev),
            cell(&self.nads_dev),
            cell(&self.sdpu_dev),
            cell(&self.pcu_dev),
            queue(&self.tc_queue),
            queue(&self.event_queue),
        ];
        Value::Object(entries.into_iter().collect())
    }
}

#[cfg(test)]
mod tests;
