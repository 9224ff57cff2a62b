use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use proptest::prelude::*;

use super::*;
use crate::domain::{names, EventKind, TaskSet};

fn pool() -> DataPool {
    DataPool::new(
        SimClock::new_virtual(),
        TaskSet::runtime().tasks(),
        &MissionConfig::default(),
    )
    .unwrap()
}

#[test]
fn write_then_read_carries_timestamp() {
    let p = pool();
    p.clock().advance_to(7_000_000);
    let sys = Caller::system();
    p.el.update(&sys, |e| e.abs_pressure_mbar = [21.5, 21.5]);
    let s = p.el.read(&sys);
    assert_eq!(s.value.pressure_mbar(), Some(21.5));
    assert_eq!(s.timestamp_ms, 7);
    assert_eq!(s.write_count, 1);
}

#[test]
fn initial_values() {
    let p = pool();
    let sys = Caller::system();
    for id in MODE_CELLS {
        let c = p.mode_cell(&id).unwrap();
        assert_eq!(
            c.read(&sys),
            Stamped {
                value: OperatingMode::PreLaunch,
                timestamp_ms: 0,
                write_count: 0
            }
        );
    }
    assert!(p.htl.get(&sys).stale);
    assert_eq!(
        p.ttc_tm_mode.get(&sys),
        TmMode {
            sc_divider: 1,
            hk_divider: 10
        }
    );
}

#[test]
fn no_torn_writes_under_contention() {
    let p = Arc::new(pool());
    let stop = Arc::new(AtomicBool::new(false));
    // each writer keeps all three components equal to its own counter
    let writers: Vec<_> = (0..2u32)
        .map(|w| {
            let p = p.clone();
            thread::spawn(move || {
                let sys = Caller::system();
                for k in 0..50_000u32 {
                    let x = (w * 1_000_000 + k) as f64;
                    p.nads.update(&sys, |n| {
                        n.accel_mps2 = [x; 3];
                        n.gyro_dps = [x; 3];
                    });
                }
            })
        })
        .collect();
    let reader = {
        let (p, stop) = (p.clone(), stop.clone());
        thread::spawn(move || {
            let sys = Caller::system();
            let mut seen = 0u64;
            let mut last_count = 0;
            while !stop.load(Ordering::Relaxed) {
                let s = p.nads.read(&sys);
                let a = s.value.accel_mps2;
                assert!(
                    a.iter().chain(&s.value.gyro_dps).all(|&v| v == a[0]),
                    "torn: {:?}",
                    s.value
                );
                let (w, k) = ((a[0] as u32) / 1_000_000, (a[0] as u32) % 1_000_000);
                assert!(w < 2 && k < 50_000);
                assert!(s.write_count >= last_count);
                last_count = s.write_count;
                seen += 1;
            }
            seen
        })
    };
    for w in writers {
        w.join().unwrap();
    }
    stop.store(true, Ordering::Relaxed);
    assert!(reader.join().unwrap() > 0);
    assert_eq!(p.nads.read(&Caller::system()).write_count, 100_000);
}

#[test]
fn eleventh_put_rejected() {
    let p = pool();
    let sys = Caller::system();
    for i in 0..10 {
        assert_eq!(
            p.event_queue
                .put(&sys, Event::new(EventKind::PressureAnomaly, i)),
            PutResult::Accepted
        );
    }
    assert_eq!(
        p.event_queue
            .put(&sys, Event::new(EventKind::FloatDetected, 10)),
        PutResult::Rejected
    );
    assert_eq!(p.event_queue.len(), 10);
    assert_eq!(p.event_queue.overflows(), 1);
    // the oldest entries survive
    assert_eq!(p.event_queue.try_take(&sys).unwrap().timestamp_ms, 0);
}

#[test]
fn fifo_order() {
    let p = pool();
    let sys = Caller::system();
    p.tc_queue
        .put(&sys, Telecommand::new(crate::domain::TcId::Ping, 1));
    p.tc_queue
        .put(&sys, Telecommand::new(crate::domain::TcId::Ping, 2));
    assert_eq!(p.tc_queue.try_take(&sys).unwrap().seq, 1);
    assert_eq!(p.tc_queue.try_take(&sys).unwrap().seq, 2);
    assert!(p.tc_queue.try_take(&sys).is_none());
}

#[test]
fn concurrent_history_is_a_merge_of_producer_orders() {
    let q = Arc::new(BoundedQueue::<(u32, u32)>::new(
        ObjectId::EVENT_QUEUE,
        3,
        10,
    ));
    let producers: Vec<_> = (0..4u32)
        .map(|pid| {
            let q = q.clone();
            thread::spawn(move || {
                let sys = Caller::system();
                let mut k = 0;
                while k < 2000 {
                    if q.put(&sys, (pid, k)) == PutResult::Accepted {
                        k += 1;
                    } else {
                        thread::yield_now();
                    }
                }
            })
        })
        .collect();
    let sys = Caller::system();
    let mut taken = Vec::new();
    while taken.len() < 8000 {
        if let Some(m) = q.take_timeout(&sys, Duration::from_millis(100)) {
            taken.push(m);
        }
    }
    for p in producers {
        p.join().unwrap();
    }
    // per-producer subsequences are exactly 0, 1, 2, ...
    for pid in 0..4 {
        let seq: Vec<u32> = taken.iter().filter(|m| m.0 == pid).map(|m| m.1).collect();
        assert_eq!(seq, (0..2000).collect::<Vec<_>>());
    }
    let stats = q.stats();
    assert_eq!(stats.accepted, 8000);
    assert_eq!(stats.taken, 8000);
}

#[test]
fn blocking_take_wakes_on_put() {
    let q = Arc::new(BoundedQueue::<u8>::new(ObjectId::TC_QUEUE, 3, 10));
    let q2 = q.clone();
    let h = thread::spawn(move || q2.take_timeout(&Caller::system(), Duration::from_secs(5)));
    thread::sleep(Duration::from_millis(20));
    q.put(&Caller::system(), 9);
    assert_eq!(h.join().unwrap(), Some(9));
    assert_eq!(
        q.take_timeout(&Caller::system(), Duration::from_millis(5)),
        None
    );
}

#[cfg(debug_assertions)]
#[test]
#[should_panic(expected = "without declaring it")]
fn undeclared_access_panics() {
    let p = pool();
    let set = TaskSet::runtime();
    let pcu = set.get(names::PCU_MANAGER).unwrap();
    p.nads.read(&Caller::task(pcu));
}

#[cfg(debug_assertions)]
#[test]
#[should_panic(expected = "nested protected access")]
fn nested_access_panics() {
    let p = pool();
    let sys = Caller::system();
    p.el.read_with(&sys, |_| p.atl.get(&sys));
}

#[test]
fn declared_access_allowed() {
    let p = pool();
    let set = TaskSet::runtime();
    let imu = set.get(names::IMU_MEASURER).unwrap();
    let c = Caller::task(imu);
    p.nads.update(&c, |n| n.imu_samples += 1);
    assert_eq!(p.nads_mode.get(&c), OperatingMode::PreLaunch);
}

struct Recorder(Arc<std::sync::Mutex<Vec<Option<u8>>>>);

impl CeilingHook for Recorder {
    fn enter(&self, ceiling: u8) {
        self.0.lock().unwrap().push(Some(ceiling));
    }
    fn exit(&self) {
        self.0.lock().unwrap().push(None);
    }
}

#[test]
fn ceiling_hook_brackets_each_access() {
    let p = pool();
    let log = Arc::new(std::sync::Mutex::new(Vec::new()));
    install_ceiling_hook(Box::new(Recorder(log.clone())));
    let sys = Caller::system();
    p.nads.get(&sys);
    p.pcu.get(&sys);
    assert_eq!(locks_held(), 0);
    clear_ceiling_hook();
    // DP-PCU is read by the TM Sender (priority 2) as well as the PCU Manager
    assert_eq!(*log.lock().unwrap(), vec![Some(6), None, Some(2), None]);
}

#[test]
fn hook_released_after_panic_inside_access() {
    let p = pool();
    let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        p.htl.read_with(&Caller::system(), |_| panic!("boom"))
    }));
    assert!(r.is_err());
    assert_eq!(locks_held(), 0);
}

#[test]
fn registry_and_snapshot() {
    let p = pool();
    let names: HashSet<String> = p
        .registry()
        .into_iter()
        .map(|(o, _)| o.to_string())
        .collect();
    assert_eq!(names.len(), 20);
    let snap = p.snapshot();
    let keys: HashSet<String> = snap.as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys, names);
    assert_eq!(p.snapshot_of("NADS-Mode").unwrap()["value"], "PreLaunch");
    assert_eq!(
        p.snapshot_of("Event-Queue").unwrap()["stats"]["capacity"],
        10
    );
    assert_eq!(
        p.snapshot_of("Bogus").unwrap_err(),
        PoolError::UnknownObject("Bogus".into())
    );
}

#[test]
fn unregistered_object_rejected_at_startup() {
    let mut set = TaskSet::runtime();
    set.get_mut(names::PCU_MANAGER)
        .unwrap()
        .accesses
        .push(ObjectId::new("DP-Extra"));
    let e = DataPool::new(
        SimClock::new_virtual(),
        set.tasks(),
        &MissionConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(e, PoolError::Ceiling(_)));
}

#[test]
fn journal_mirrors_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let j: Journal<ModeRecord> = Journal::default();
    let path = dir.path().join("modes.jsonl");
    j.attach_file(&path).unwrap();
    j.append(ModeRecord {
        t_ms: 5,
        mode: OperatingMode::Ascent1,
        previous: OperatingMode::PreLaunch,
        cause: "pressure".into(),
    });
    j.flush().unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(
        text,
        "{\"t_ms\":5,\"mode\":\"Ascent1\",\"previous\":\"PreLaunch\",\"cause\":\"pressure\"}\n"
    );
    assert_eq!(j.since(1).len(), 0);
    assert_eq!(j.since(9).len(), 0);
}

proptest! {
    #[test]
    fn write_count_and_timestamp_monotone(steps in proptest::collection::vec(0u64..5_000, 1..50)) {
        let p = pool();
        let sys = Caller::system();
        let mut last = p.pcu.read(&sys);
        for (i, dt) in steps.iter().enumerate() {
            p.clock().advance_by(dt * 1_000_000);
            p.pcu.update(&sys, |s| s.errors = i as u64);
            let now = p.pcu.read(&sys);
            prop_assert_eq!(now.write_count, last.write_count + 1);
            prop_assert!(now.timestamp_ms >= last.timestamp_ms);
            prop_assert_eq!(now.value.errors, i as u64);
            last = now;
        }
    }

    #[test]
    fn queue_never_exceeds_capacity(ops in proptest::collection::vec(any::<bool>(), 0..200), cap in 1usize..12) {
        let q = BoundedQueue::<usize>::new(ObjectId::TC_QUEUE, 3, cap);
        let sys = Caller::system();
        let mut model = std::collections::VecDeque::new();
        for (i, put) in ops.into_iter().enumerate() {
            if put {
                let r = q.put(&sys, i);
                if model.len() < cap {
                    model.push_back(i);
                    prop_assert_eq!(r, PutResult::Accepted);
                } else {
                    prop_assert_eq!(r, PutResult::Rejected);
                }
            } else {
                prop_assert_eq!(q.try_take(&sys), model.pop_front());
            }
            prop_assert!(q.len() <= cap);
        }
    }
}
