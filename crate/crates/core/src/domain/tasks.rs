//! Task descriptors, the shipped task set, and the two static analyses run
//! on it: priority ceilings and deadline-monotonic ordering.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of a protected object (data-pool cell or queue).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(Cow<'static, str>);

impl ObjectId {
    pub const DP_NADS: ObjectId = ObjectId::of("DP-NADS");
    pub const DP_HTL: ObjectId = ObjectId::of("DP-HTL");
    pub const DP_EL: ObjectId = ObjectId::of("DP-EL");
    pub const DP_PCU: ObjectId = ObjectId::of("DP-PCU");
    pub const DP_ATL: ObjectId = ObjectId::of("DP-ATL");
    pub const NADS_MODE: ObjectId = ObjectId::of("NADS-Mode");
    pub const HTL_MODE: ObjectId = ObjectId::of("HTL-Mode");
    pub const SDPU_MODE: ObjectId = ObjectId::of("SDPU-Mode");
    pub const PCU_MODE: ObjectId = ObjectId::of("PCU-Mode");
    pub const TTC_MODE: ObjectId = ObjectId::of("TTC-Mode");
    pub const TTC_TM_MODE: ObjectId = ObjectId::of("TTC-TM-Mode");
    pub const HTL_CTRLR: ObjectId = ObjectId::of("HTL-Ctrlr");
    pub const EL_CTRLR: ObjectId = ObjectId::of("EL-Ctrlr");
    pub const SDPU_CTRLR: ObjectId = ObjectId::of("SDPU-Ctrlr");
    pub const HTL_DEV: ObjectId = ObjectId::of("HTL-Dev");
    pub const NADS_DEV: ObjectId = ObjectId::of("NADS-Dev");
    pub const SDPU_DEV: ObjectId = ObjectId::of("SDPU-Dev");
    pub const PCU_DEV: ObjectId = ObjectId::of("PCU-Dev");
    pub const TC_QUEUE: ObjectId = ObjectId::of("TC-Queue");
    pub const EVENT_QUEUE: ObjectId = ObjectId::of("Event-Queue");

    /// Every protected object of the onboard software.
    pub const ALL: [ObjectId; 20] = [
        Self::DP_NADS,
        Self::DP_HTL,
        Self::DP_EL,
        Self::DP_PCU,
        Self::DP_ATL,
        Self::NADS_MODE,
        Self::HTL_MODE,
        Self::SDPU_MODE,
        Self::PCU_MODE,
        Self::TTC_MODE,
        Self::TTC_TM_MODE,
        Self::HTL_CTRLR,
        Self::EL_CTRLR,
        Self::SDPU_CTRLR,
        Self::HTL_DEV,
        Self::NADS_DEV,
        Self::SDPU_DEV,
        Self::PCU_DEV,
        Self::TC_QUEUE,
        Self::EVENT_QUEUE,
    ];

    pub const fn of(name: &'static str) -> Self {
        ObjectId(Cow::Borrowed(name))
    }

    pub fn new(name: impl Into<String>) -> Self {
        ObjectId(Cow::Owned(name.into()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    Cyclic,
    Sporadic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
    /// Period for cyclic tasks, minimum inter-arrival time for sporadic ones.
    pub period_or_miat_ms: u64,
    pub deadline_ms: u64,
    /// Larger is more urgent.
    pub priority: u8,
    pub accesses: Vec<ObjectId>,
}

impl TaskSpec {
    pub fn cyclic(name: &str, period_ms: u64, deadline_ms: u64, priority: u8) -> Self {
        Self {
            name: name.into(),
            kind: TaskKind::Cyclic,
            period_or_miat_ms: period_ms,
            deadline_ms,
            priority,
            accesses: Vec::new(),
        }
    }

    pub fn sporadic(name: &str, miat_ms: u64, deadline_ms: u64, priority: u8) -> Self {
        Self {
            kind: TaskKind::Sporadic,
            ..Self::cyclic(name, miat_ms, deadline_ms, priority)
        }
    }

    pub fn accessing(mut self, objects: &[ObjectId]) -> Self {
        self.accesses.extend(objects.iter().cloned());
        self
    }

    pub fn may_access(&self, obj: &ObjectId) -> bool {
        self.accesses.contains(obj)
    }
}

pub mod names {
    pub const TC_HANDLER: &str = "TC Handler";
    pub const EVENT_HANDLER: &str = "Event Handler";
    pub const TC_RECEIVER: &str = "TC Receiver";
    pub const TM_SENDER: &str = "TM Sender";
    pub const IMU_MEASURER: &str = "IMU Measurer";
    pub const GPS_MEASURER: &str = "GPS Measurer";
    pub const HTL_MANAGER: &str = "HTL Manager";
    pub const SDPU_MEASURER: &str = "SDPU Measurer";
    pub const PCU_MANAGER: &str = "PCU Manager";
}

/// An ordered collection of task descriptors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSet(pub Vec<TaskSpec>);

impl TaskSet {
    /// The nine onboard tasks with their documented periods, deadlines,
    /// priorities and protected-object accesses, verbatim.
    pub fn documented() -> Self {
        use names::*;
        use ObjectId as O;
        TaskSet(vec![
            TaskSpec::sporadic(TC_HANDLER, 1000, 500, 3).accessing(&[
                O::TC_QUEUE,
                O::NADS_MODE,
                O::NADS_DEV,
                O::HTL_MODE,
                O::HTL_CTRLR,
                O::HTL_DEV,
                O::SDPU_MODE,
                O::SDPU_DEV,
                O::EL_CTRLR,
                O::PCU_MODE,
                O::PCU_DEV,
                O::TTC_MODE,
                O::TTC_TM_MODE,
            ]),
            TaskSpec::sporadic(EVENT_HANDLER, 1000, 500, 3).accessing(&[
                O::EVENT_QUEUE,
                O::NADS_MODE,
                O::HTL_MODE,
                O::HTL_CTRLR,
                O::PCU_MODE,
                O::SDPU_MODE,
                O::EL_CTRLR,
                O::TTC_MODE,
            ]),
            TaskSpec::sporadic(TC_RECEIVER, 1000, 1000, 2).accessing(&[
                O::EVENT_QUEUE,
                O::TTC_TM_MODE,
                O::TC_QUEUE,
                O::DP_NADS,
                O::DP_HTL,
                O::DP_EL,
                O::DP_PCU,
                O::DP_ATL,
            ]),
            TaskSpec::cyclic(TM_SENDER, 1000, 1000, 2).accessing(&[
                O::EVENT_QUEUE,
                O::TTC_TM_MODE,
                O::TTC_MODE,
            ]),
            TaskSpec::cyclic(IMU_MEASURER, 10, 10, 6).accessing(&[O::NADS_MODE, O::DP_NADS]),
            TaskSpec::cyclic(GPS_MEASURER, 200, 200, 5).accessing(&[O::NADS_MODE, O::DP_NADS]),
            TaskSpec::cyclic(HTL_MANAGER, 10_000, 10_000, 4).accessing(&[
                O::HTL_MODE,
                O::HTL_CTRLR,
                O::DP_HTL,
                O::DP_EL,
            ]),
            TaskSpec::cyclic(SDPU_MEASURER, 1000, 1000, 3).accessing(&[
                O::EVENT_QUEUE,
                O::SDPU_MODE,
                O::SDPU_CTRLR,
                O::DP_ATL,
                O::DP_EL,
                O::EL_CTRLR,
            ]),
            TaskSpec::cyclic(PCU_MANAGER, 5000, 5000, 1).accessing(&[O::PCU_MODE, O::DP_PCU]),
        ])
    }

    /// The task set the runtime executes: the documented set plus the
    /// accesses its bodies need to consume device commands and build TM.
    ///
    /// - TM Sender reads the five subsystem cells to build SC/HK frames.
    /// - TC Handler puts injected events and ping replies on Event-Queue.
    /// - IMU Measurer reads NADS-Dev for calibrate/restart commands.
    /// - PCU Manager reads PCU-Dev for power-switch overrides.
    pub fn runtime() -> Self {
        use names::*;
        use ObjectId as O;
        let mut set = Self::documented();
        let extra: [(&str, &[ObjectId]); 4] = [
            (
                TM_SENDER,
                &[O::DP_NADS, O::DP_HTL, O::DP_EL, O::DP_PCU, O::DP_ATL],
            ),
            (TC_HANDLER, &[O::EVENT_QUEUE]),
            (IMU_MEASURER, &[O::NADS_DEV]),
            (PCU_MANAGER, &[O::PCU_DEV]),
        ];
        for (name, objs) in extra {
            let t = set.get_mut(name).expect("documented task");
            for o in objs {
                if !t.accesses.contains(o) {
                    t.accesses.push(o.clone());
                }
            }
        }
        set
    }

    pub fn get(&self, name: &str) -> Option<&TaskSpec> {
        self.0.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut TaskSpec> {
        self.0.iter_mut().find(|t| t.name == name)
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.0
    }

    /// Every object referenced by at least one task.
    pub fn objects(&self) -> BTreeSet<ObjectId> {
        self.0
            .iter()
            .flat_map(|t| t.accesses.iter().cloned())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CeilingError {
    #[error("task `{task}` references unknown protected object `{object}`")]
    UnknownObject { task: String, object: ObjectId },
    #[error("protected object `{0}` is not accessed by any task")]
    Orphan(ObjectId),
}

/// Ceiling priority of each protected object.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Ceilings(BTreeMap<ObjectId, u8>);

impl Ceilings {
    /// Ceilings over exactly the objects the tasks reference.
    pub fn from_tasks(tasks: &[TaskSpec]) -> Self {
        let mut map = BTreeMap::new();
        for t in tasks {
            for o in &t.accesses {
                let c = map.entry(o.clone()).or_insert(t.priority);
                *c = (*c).max(t.priority);
            }
        }
        Ceilings(map)
    }

    pub fn get(&self, obj: &ObjectId) -> Option<u8> {
        self.0.get(obj).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ObjectId, u8)> {
        self.0.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Ceiling of every registered object: the maximum priority over all tasks
/// that list it. Every task reference must name a registered object and every
/// registered object must be referenced.
pub fn compute_ceilings(
    tasks: &[TaskSpec],
    registry: &[ObjectId],
) -> Result<Ceilings, CeilingError> {
    let known: BTreeSet<&ObjectId> = registry.iter().collect();
    for t in tasks {
        if let Some(o) = t.accesses.iter().find(|o| !known.contains(o)) {
            return Err(CeilingError::UnknownObject {
                task: t.name.clone(),
                object: o.clone(),
            });
        }
    }
    let ceilings = Ceilings::from_tasks(tasks);
    if let Some(orphan) = registry.iter().find(|o| ceilings.get(o).is_none()) {
        return Err(CeilingError::Orphan(orphan.clone()));
    }
    Ok(ceilings)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskSetError {
    #[error("task set is empty")]
    Empty,
    #[error("duplicate task name `{0}`")]
    DuplicateName(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ValidationIssue {
    /// `task` outranks tasks whose deadlines are no longer than its own.
    NotDeadlineMonotonic { task: String, outranks: Vec<String> },
    DeadlineExceedsPeriod {
        task: String,
        deadline_ms: u64,
        period_ms: u64,
    },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::NotDeadlineMonotonic { task, outranks } => write!(
                f,
                "{task} has higher priority than {} despite a deadline no shorter",
                outranks.join(", ")
            ),
            ValidationIssue::DeadlineExceedsPeriod {
                task,
                deadline_ms,
                period_ms,
            } => write!(
                f,
                "{task}: deadline {deadline_ms} ms exceeds period {period_ms} ms"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub warnings: Vec<ValidationIssue>,
    pub errors: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks the deadline-monotonic priority ordering (warnings only: the
/// ordering may be deliberately broken) and constrained deadlines (errors).
pub fn validate_task_set(tasks: &[TaskSpec]) -> Result<ValidationReport, TaskSetError> {
    if tasks.is_empty() {
        return Err(TaskSetError::Empty);
    }
    let mut seen = BTreeSet::new();
    for t in tasks {
        if !seen.insert(t.name.as_str()) {
            return Err(TaskSetError::DuplicateName(t.name.clone()));
        }
    }

    let mut report = ValidationReport::default();
    for t in tasks {
        let outranks: Vec<String> = tasks
            .iter()
            .filter(|o| {
                o.name != t.name && o.deadline_ms <= t.deadline_ms && t.priority > o.priority
            })
            .map(|o| o.name.clone())
            .collect();
        if !outranks.is_empty() {
            report.warnings.push(ValidationIssue::NotDeadlineMonotonic {
                task: t.name.clone(),
                outranks,
            });
        }
        if t.deadline_ms > t.period_or_miat_ms {
            report.errors.push(ValidationIssue::DeadlineExceedsPeriod {
                task: t.name.clone(),
                deadline_ms: t.deadline_ms,
                period_ms: t.period_or_miat_ms,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::names::*;
    use super::*;
    use proptest::prelude::*;

    /// Brute force: for each object scan every task and every access entry.
    fn ceiling_oracle(tasks: &[TaskSpec], obj: &ObjectId) -> Option<u8> {
        let mut best: Option<u8> = None;
        for t in tasks {
            for a in &t.accesses {
                if a == obj {
                    best = Some(match best {
                        Some(b) if b >= t.priority => b,
                        _ => t.priority,
                    });
                }
            }
        }
        best
    }

    #[test]
    fn documented_ceilings_match_oracle() {
        let set = TaskSet::documented();
        let c = compute_ceilings(set.tasks(), &ObjectId::ALL).unwrap();
        assert_eq!(c.len(), ObjectId::ALL.len());
        for o in ObjectId::ALL.iter() {
            assert_eq!(c.get(o), ceiling_oracle(set.tasks(), o), "{o}");
        }
        assert_eq!(c.get(&ObjectId::DP_NADS), Some(6));
        assert_eq!(c.get(&ObjectId::EVENT_QUEUE), Some(3));
    }

    #[test]
    fn runtime_set_keeps_documented_ceilings_where_pinned() {
        let c = compute_ceilings(TaskSet::runtime().tasks(), &ObjectId::ALL).unwrap();
        assert_eq!(c.get(&ObjectId::DP_NADS), Some(6));
        assert_eq!(c.get(&ObjectId::EVENT_QUEUE), Some(3));
        assert_eq!(c.get(&ObjectId::NADS_DEV), Some(6));
    }

    #[test]
    fn single_task_single_object() {
        let t = TaskSpec::cyclic("solo", 100, 100, 4).accessing(&[ObjectId::DP_PCU]);
        let c = compute_ceilings(&[t], &[ObjectId::DP_PCU]).unwrap();
        assert_eq!(c.get(&ObjectId::DP_PCU), Some(4));
    }

    #[test]
    fn unknown_and_orphan_objects_rejected() {
        let t = TaskSpec::cyclic("a", 100, 100, 1).accessing(&[ObjectId::new("Ghost")]);
        let err = compute_ceilings(&[t], &[]).unwrap_err();
        assert_eq!(
            err,
            CeilingError::UnknownObject {
                task: "a".into(),
                object: ObjectId::new("Ghost")
            }
        );
        let t = TaskSpec::cyclic("a", 100, 100, 1).accessing(&[ObjectId::DP_PCU]);
        let err = compute_ceilings(&[t], &[ObjectId::DP_PCU, ObjectId::DP_EL]).unwrap_err();
        assert_eq!(err, CeilingError::Orphan(ObjectId::DP_EL));
    }

    #[test]
    fn documented_set_warnings() {
        let r = validate_task_set(TaskSet::documented().tasks()).unwrap();
        assert!(r.errors.is_empty());
        assert_eq!(r.warnings.len(), 2, "{:?}", r.warnings);
        let flagged: Vec<_> = r
            .warnings
            .iter()
            .map(|w| match w {
                ValidationIssue::NotDeadlineMonotonic { task, outranks } => {
                    (task.as_str(), outranks.clone())
                }
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(flagged[0].0, HTL_MANAGER);
        assert_eq!(flagged[1].0, SDPU_MEASURER);
        assert_eq!(
            flagged[1].1,
            vec![TC_RECEIVER.to_string(), TM_SENDER.to_string()]
        );
    }

    #[test]
    fn shipped_set_invariants() {
        for set in [TaskSet::documented(), TaskSet::runtime()] {
            for t in set.tasks() {
                assert!(t.deadline_ms <= t.period_or_miat_ms, "{}", t.name);
                assert!((1..=6).contains(&t.priority), "{}", t.name);
            }
        }
        // registry names exactly cover the access column
        let objs: BTreeSet<_> = ObjectId::ALL.iter().cloned().collect();
        assert_eq!(TaskSet::documented().objects(), objs);
        assert_eq!(TaskSet::runtime().objects(), objs);
    }

    #[test]
    fn one_task_has_no_warnings() {
        let r = validate_task_set(&[TaskSpec::cyclic("x", 10, 10, 1)]).unwrap();
        assert!(r.warnings.is_empty() && r.errors.is_empty());
    }

    #[test]
    fn deadline_beyond_period_is_error() {
        let r = validate_task_set(&[TaskSpec::cyclic("x", 1000, 2000, 1)]).unwrap();
        assert_eq!(r.errors.len(), 1);
        assert!(!r.is_ok());
    }

    #[test]
    fn duplicate_names_and_empty_rejected() {
        assert_eq!(validate_task_set(&[]), Err(TaskSetError::Empty));
        let t = TaskSpec::cyclic("x", 10, 10, 1);
        assert_eq!(
            validate_task_set(&[t.clone(), t]),
            Err(TaskSetError::DuplicateName("x".into()))
        );
    }

    proptest! {
        #[test]
        fn ceilings_invariant_under_permutation(seed in any::<u64>()) {
            let mut tasks = TaskSet::documented().0;
            // Fisher-Yates driven by the seed
            let mut s = seed;
            for i in (1..tasks.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                tasks.swap(i, j);
            }
            let a = compute_ceilings(&tasks, &ObjectId::ALL).unwrap();
            let b = compute_ceilings(TaskSet::documented().tasks(), &ObjectId::ALL).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
