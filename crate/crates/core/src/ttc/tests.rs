use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

use super::*;
use crate::datapool::{AckStage, AckStatus, Caller, DataPool};
use crate::domain::names::{EVENT_HANDLER, TC_HANDLER, TC_RECEIVER, TM_SENDER};
use crate::domain::{ControlAuthority, EventKind, MissionConfig, TaskSet, TaskSpec, TcId};
use crate::executor::{ExecConfig, ExecMode, Executor, TaskBody, TaskCtx};
use crate::manager::{EventHandler, Manager, QueueSource, TcHandler};
use crate::time::{block_on, SimClock, NS_PER_MS};

struct Rig {
    pool: Arc<DataPool>,
    hub: Arc<LinkHub>,
    gs: Arc<Mutex<GsSession>>,
    dir: tempfile::TempDir,
}

impl Rig {
    fn run(script: GsScript, secs: f64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let clock = SimClock::new_virtual();
        let cfg = Arc::new(MissionConfig::default());
        let set = TaskSet::runtime();
        let pool = Arc::new(DataPool::new(clock.clone(), set.tasks(), &cfg).unwrap());
        let (t, end) = virtual_link();
        let hub = Arc::new(LinkHub::new(
            Box::new(t),
            clock.clone(),
            cfg.heartbeat_timeout_ms,
        ));
        let mgr = Manager::new(pool.clone(), cfg.clone());
        let spec = |n: &str| set.get(n).unwrap().clone();
        let mut ex = Executor::new(clock, ExecConfig::default());
        let tm = TmSender::new(hub.clone(), pool.clone())
            .with_logs(dir.path())
            .unwrap();
        ex.register_cyclic(spec(TM_SENDER), Box::new(tm)).unwrap();
        ex.register_sporadic(
            spec(TC_RECEIVER),
            hub.clone(),
            Box::new(TcReceiver::new(hub.clone(), pool.clone())),
        )
        .unwrap();
        ex.register_sporadic(
            spec(TC_HANDLER),
            QueueSource::tc(pool.clone()),
            Box::new(TcHandler(mgr.clone())),
        )
        .unwrap();
        ex.register_sporadic(
            spec(EVENT_HANDLER),
            QueueSource::events(pool.clone()),
            Box::new(EventHandler(mgr)),
        )
        .unwrap();
        let gs = VirtualGs::new(end, GsSession::new(script));
        let session = gs.session();
        ex.register_cyclic(
            TaskSpec::cyclic("Ground Station", 1000, 1000, 0),
            Box::new(gs),
        )
        .unwrap();
        ex.run(secs, ExecMode::Deterministic).unwrap();
        Self {
            pool,
            hub,
            gs: session,
            dir,
        }
    }

    fn transcript(&self) -> Vec<TranscriptEntry> {
        self.gs.lock().unwrap().entries().to_vec()
    }

    fn down(&self, ty: &str) -> Vec<TranscriptEntry> {
        self.transcript()
            .into_iter()
            .filter(|e| e.dir == "down" && e.ftype == ty)
            .collect()
    }

    fn onboard(&self, name: &str) -> Vec<Value> {
        read_jsonl(self.dir.path().join(name)).unwrap()
    }
}

#[test]
fn nominal_minute_gives_60_sc_and_6_hk() {
    let rig = Rig::run(GsScript::default(), 60.0);
    assert_eq!(rig.down("TM_SC").len(), 60);
    assert_eq!(rig.down("TM_HK").len(), 6);
    assert_eq!(rig.down("HEARTBEAT").len(), 60);
    assert!(rig.down("EVENT").is_empty());
    assert!(
        rig.pool.events.is_empty(),
        "stable link raises no link events"
    );
    let summary = rig.gs.lock().unwrap().summary(60.0);
    assert_eq!(summary.seq_violations, 0);
    let bw = rig.hub.bandwidth();
    assert!(
        bw.within_quota && bw.downlink_kbps > 0.0 && bw.uplink_kbps > 0.0,
        "{bw:?}"
    );
    assert_eq!(rig.onboard("tm_sc.jsonl").len(), 60);
    assert_eq!(rig.onboard("tm_hk.jsonl").len(), 6);
    let hk = &rig.down("TM_HK")[0].payload;
    assert_eq!(hk["mode"], "PreLaunch");
    assert_eq!(hk["counters"]["link"]["state"], "Connected");
}

#[test]
fn downlink_seq_strictly_increases() {
    let rig = Rig::run(GsScript::default().tc(3.0, TcId::Ping, json!({})), 20.0);
    let seqs: Vec<u32> = rig
        .transcript()
        .iter()
        .filter(|e| e.dir == "down")
        .map(|e| e.seq)
        .collect();
    assert!(seqs.windows(2).all(|w| w[1] > w[0]));
    let up: Vec<u32> = rig
        .transcript()
        .iter()
        .filter(|e| e.dir == "up")
        .map(|e| e.seq)
        .collect();
    assert!(up.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn halving_sc_rate_gives_30_per_minute() {
    let script = GsScript::default().tc(0.0, TcId::SetTmRate, json!({ "sc_period_ms": 2000 }));
    let rig = Rig::run(script, 60.0);
    assert_eq!(rig.down("TM_SC").len(), 30);
    let acks = rig.down("TC_ACK");
    let stages: Vec<_> = acks
        .iter()
        .map(|a| (a.payload["stage"].clone(), a.payload["status"].clone()))
        .collect();
    assert_eq!(
        stages,
        vec![
            (json!("received"), json!("accepted")),
            (json!("executed"), json!("accepted"))
        ]
    );
}

#[test]
fn link_drop_is_one_loss_one_restore_and_onboard_log_is_gapless() {
    let script = GsScript::default()
        .tc(5.0, TcId::SetAuthority, json!({ "authority": "Manual" }))
        .step(10.0, GsAction::Drop)
        .step(20.0, GsAction::Reconnect);
    let rig = Rig::run(script, 40.0);
    let ev = rig.pool.events.all();
    let kinds: Vec<_> = ev.iter().map(|e| e.kind).collect();
    assert_eq!(kinds, vec![EventKind::LinkLost, EventKind::LinkRestored]);
    assert!(
        ev[0].t_ms > 10_000 && ev[0].t_ms <= 13_000,
        "lost at {}",
        ev[0].t_ms
    );
    let sys = Caller::system();
    assert_eq!(
        rig.pool.htl_ctrlr.get(&sys).authority,
        ControlAuthority::Autonomous
    );

    let sc = rig.onboard("tm_sc.jsonl");
    assert_eq!(sc.len(), 40);
    let t: Vec<u64> = sc.iter().map(|l| l["t_ms"].as_u64().unwrap()).collect();
    assert!(t.windows(2).all(|w| w[1] - w[0] == 1000));
    assert!(sc.iter().any(|l| l["sent"] == false));

    let ts: Vec<u64> = rig.down("TM_SC").iter().map(|e| e.timestamp_ms).collect();
    let gap = ts.windows(2).map(|w| w[1] - w[0]).max().unwrap();
    assert!(gap >= 10_000, "transcript gap {gap}");
    assert!(ts.len() < 40);
    // the outage is reported to the ground after the reconnect
    let ev_down: Vec<_> = rig
        .down("EVENT")
        .iter()
        .map(|e| e.payload["kind"].clone())
        .collect();
    assert_eq!(ev_down, vec![json!("LinkLost"), json!("LinkRestored")]);
}

#[test]
fn burst_of_eleven_rejects_the_eleventh() {
    let mut script = GsScript::default();
    for _ in 0..11 {
        script = script.tc(2.0, TcId::Ping, json!({}));
    }
    let rig = Rig::run(script, 4.0);
    let received: Vec<_> = rig
        .pool
        .acks
        .all()
        .into_iter()
        .filter(|a| a.stage == AckStage::Received)
        .collect();
    assert_eq!(received.len(), 11);
    assert!(received[..10]
        .iter()
        .all(|a| a.status == AckStatus::Accepted));
    assert_eq!(received[10].status, AckStatus::Rejected);
    assert_eq!(received[10].seq, 11);
    assert_eq!(received[10].reason.as_deref(), Some("TC queue full"));
}

fn standalone(name: &str, clock: &SimClock) -> TaskCtx {
    TaskCtx::standalone(TaskSet::runtime().get(name).unwrap().clone(), clock.clone())
}

struct Bench {
    clock: SimClock,
    pool: Arc<DataPool>,
    hub: Arc<LinkHub>,
    end: VirtualGsEnd,
}

fn bench() -> Bench {
    let clock = SimClock::new_virtual();
    let pool = Arc::new(
        DataPool::new(
            clock.clone(),
            TaskSet::runtime().tasks(),
            &MissionConfig::default(),
        )
        .unwrap(),
    );
    let (t, end) = virtual_link();
    let hub = Arc::new(LinkHub::new(Box::new(t), clock.clone(), 3000));
    end.connect();
    hub.service();
    assert!(hub.is_connected());
    Bench {
        clock,
        pool,
        hub,
        end,
    }
}

#[test]
fn garbage_resyncs_without_touching_the_queue() {
    let b = bench();
    let mut rx = TcReceiver::new(b.hub.clone(), b.pool.clone());
    let ctx = standalone(TC_RECEIVER, &b.clock);
    b.end.send(&[0x00, 0x13, 0x5C, 0x00, 0xFF, 0xA7]);
    block_on(rx.run(&ctx));
    assert_eq!(b.pool.tc_queue.len(), 0);
    assert!(b.pool.acks.is_empty());
    assert!(b.hub.status().decoder.skipped_bytes >= 5);
}

#[test]
fn malformed_and_stale_telecommands_are_rejected_on_receipt() {
    let b = bench();
    let mut rx = TcReceiver::new(b.hub.clone(), b.pool.clone());
    let ctx = standalone(TC_RECEIVER, &b.clock);
    let tc = |seq: u32, body: Value| {
        Frame::json(FrameType::Tc, seq, 0, &body)
            .unwrap()
            .encode()
            .unwrap()
    };
    b.end.send(&tc(0, json!({ "id": "Warp", "seq": 1 })));
    b.end.send(&tc(1, json!({ "id": "Ping", "seq": 2 })));
    b.end.send(&tc(2, json!({ "id": "Ping", "seq": 2 })));
    block_on(rx.run(&ctx));
    let acks = b.pool.acks.all();
    let st: Vec<_> = acks.iter().map(|a| (a.seq, a.status)).collect();
    assert_eq!(
        st,
        vec![
            (1, AckStatus::Rejected),
            (2, AckStatus::Accepted),
            (2, AckStatus::Rejected)
        ]
    );
    assert_eq!(b.pool.tc_queue.len(), 1);
    // acks travel back down the link
    let mut d = FrameDecoder::default();
    let frames = d.feed(&b.end.recv());
    assert_eq!(
        frames
            .iter()
            .filter(|f| f.ftype == FrameType::TcAck)
            .count(),
        3
    );
}

#[test]
fn silence_times_out_and_closes_the_link() {
    let b = bench();
    let ctx = standalone(TM_SENDER, &b.clock);
    let mut tm = TmSender::new(b.hub.clone(), b.pool.clone());
    block_on(tm.run(&ctx));
    b.clock.advance_by(2999 * NS_PER_MS);
    b.hub.service();
    assert!(b.hub.is_connected());
    b.clock.advance_by(NS_PER_MS);
    block_on(tm.run(&ctx));
    assert_eq!(b.hub.state(), LinkState::Lost);
    assert!(!b.end.is_open());
    let q = b.pool.event_queue.peek_all();
    assert_eq!(q.len(), 1);
    assert_eq!(q[0].kind, EventKind::LinkLost);
    assert_eq!(tm.sc_count(), 2, "onboard logging continues");
}

#[test]
fn full_event_queue_defers_link_events() {
    let b = bench();
    let sys = Caller::system();
    for i in 0..10 {
        b.pool.event_queue.put(
            &sys,
            crate::domain::Event::new(EventKind::OperatorInjected, i),
        );
    }
    b.end.disconnect();
    let ctx = standalone(TM_SENDER, &b.clock);
    let mut tm = TmSender::new(b.hub.clone(), b.pool.clone());
    block_on(tm.run(&ctx));
    assert_eq!(b.pool.event_queue.len(), 10);
    b.pool.event_queue.try_take(&sys);
    block_on(tm.run(&ctx));
    assert_eq!(
        b.pool.event_queue.peek_all().last().unwrap().kind,
        EventKind::LinkLost
    );
}

#[test]
fn tcp_newest_connection_wins() {
    use std::io::Read;
    use std::net::TcpStream;
    let clock = SimClock::new_virtual();
    let t = TcpTransport::bind("127.0.0.1:0").unwrap();
    let addr = t.local_addr().unwrap();
    let hub = LinkHub::new(Box::new(t), clock.clone(), 3000);
    let service_until = |cond: &dyn Fn(&LinkHub) -> bool| {
        for _ in 0..500 {
            hub.service();
            if cond(&hub) {
                return;
            }
            std::thread::sleep(std::time::Duration::from_millis(2));
        }
        panic!("condition not reached");
    };
    let mut c1 = TcpStream::connect(addr).unwrap();
    service_until(&|h| h.is_connected());
    assert!(hub.send(FrameType::Heartbeat, Vec::new()));
    let mut buf = [0u8; 22];
    c1.read_exact(&mut buf).unwrap();
    assert_eq!(decode_frame(&buf).unwrap().ftype, FrameType::Heartbeat);

    let mut c2 = TcpStream::connect(addr).unwrap();
    service_until(&|h| h.status().sessions == 2);
    assert!(hub.take_events().is_empty());
    assert_eq!(c1.read(&mut buf).unwrap_or(0), 0, "old session closed");
    assert!(hub.send(FrameType::Heartbeat, Vec::new()));
    c2.read_exact(&mut buf).unwrap();
    assert_eq!(decode_frame(&buf).unwrap().seq, 1);

    drop(c2);
    service_until(&|h| h.state() == LinkState::Lost);
    assert_eq!(hub.take_events(), vec![EventKind::LinkLost]);
}

#[test]
fn script_json_round_trip() {
    let text = r#"{"actions":[{"t_s":5,"action":"tc","id":"SetMode","args":{"mode":"Float1"}},
        {"t_s":10,"action":"drop"},{"t_s":20,"action":"reconnect"}]}"#;
    let s = GsScript::from_json(text).unwrap();
    assert_eq!(s.actions.len(), 3);
    assert!(
        matches!(&s.actions[0].action, GsAction::Tc { id: TcId::SetMode, args } if args["mode"] == "Float1")
    );
    assert_eq!(s.actions[1].action, GsAction::Drop);
    let back = GsScript::from_json(&serde_json::to_string(&s).unwrap()).unwrap();
    assert_eq!(back, s);
    assert!(GsScript::from_json(r#"{"actions":[{"t_s":-1,"action":"drop"}]}"#).is_err());
}
