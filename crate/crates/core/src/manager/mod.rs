//! The two sporadic manager tasks: telecommand execution and event
//! handling, both driving the mode automaton.

use std::sync::{Arc, Mutex, PoisonError};

use async_trait::async_trait;
use serde_json::{json, Value};

use crate::datapool::{
    AckRecord, AckStage, AckStatus, Caller, DataPool, EventRecord, ModeRecord, PutResult,
    MODE_CELLS,
};
use crate::domain::state::{DeviceCommand, HEATER_COUNT, SWITCH_COUNT};
use crate::domain::{
    mode_transition, ControlAuthority, Event, EventKind, MissionConfig, OperatingMode, Stimulus,
    TcId, Telecommand,
};
use crate::executor::{ActivationSource, TaskBody, TaskCtx};

/// Writes `mode` into the five subsystem mode cells in [`MODE_CELLS`] order
/// and journals the change. Returns false, touching nothing, if the cells
/// already hold `mode`.
pub fn propagate_mode(
    pool: &DataPool,
    caller: &Caller<'_>,
    mode: OperatingMode,
    cause: &str,
) -> bool {
    let previous = pool.nads_mode.get(caller);
    if previous == mode {
        return false;
    }
    for id in &MODE_CELLS {
        pool.mode_cell(id).expect("mode cell").write(caller, mode);
    }
    pool.modes.append(ModeRecord {
        t_ms: pool.clock().now_ms(),
        mode,
        previous,
        cause: cause.to_owned(),
    });
    true
}

/// State shared by both manager tasks.
#[derive(Debug)]
pub struct Manager {
    pool: Arc<DataPool>,
    cfg: Arc<MissionConfig>,
    /// Serialises read-decide-propagate so the five cells change together.
    automaton: Mutex<()>,
}

type TcOutcome = Result<Option<Value>, String>;

fn arg_index(tc: &Telecommand, key: &str, count: usize) -> Result<usize, String> {
    match tc.arg_u64(key) {
        Some(i) if (i as usize) < count => Ok(i as usize),
        Some(i) => Err(format!("`{key}` {i} out of range 0..{count}")),
        None => Err(format!("missing integer `{key}`")),
    }
}

/// Neutral pressure for events without one: every threshold comparison
/// in the automaton is false for NaN.
const NO_PRESSURE: f64 = f64::NAN;

impl Manager {
    pub fn new(pool: Arc<DataPool>, cfg: Arc<MissionConfig>) -> Arc<Self> {
        Arc::new(Self {
            pool,
            cfg,
            automaton: Mutex::new(()),
        })
    }

    pub fn pool(&self) -> &Arc<DataPool> {
        &self.pool
    }

    fn set_authority(&self, caller: &Caller<'_>, a: ControlAuthority) {
        self.pool.htl_ctrlr.update(caller, |c| c.authority = a);
        self.pool.el_ctrlr.update(caller, |c| c.authority = a);
    }

    fn device_command(tc: &Telecommand, t_ms: u64) -> Option<DeviceCommand> {
        Some(DeviceCommand {
            seq: tc.seq,
            t_ms,
            command: format!("{:?}", tc.id),
            args: tc.args.clone(),
        })
    }

    /// Executes one telecommand against the pool.
    pub fn execute(&self, caller: &Caller<'_>, tc: &Telecommand) -> TcOutcome {
        let pool = &self.pool;
        let now = pool.clock().now_ms();
        match tc.id {
            TcId::SetMode => {
                let _g = self
                    .automaton
                    .lock()
                    .unwrap_or_else(PoisonError::into_inner);
                let current = pool.nads_mode.get(caller);
                let tr = mode_transition(
                    current,
                    &Stimulus::pressure(NO_PRESSURE).with_tc(tc),
                    &self.cfg,
                );
                if let Some(why) = tr.rejection {
                    return Err(why.to_string());
                }
                propagate_mode(pool, caller, tr.mode, &format!("TC SetMode seq {}", tc.seq));
                Ok(Some(json!({ "mode": tr.mode })))
            }
            TcId::SetAuthority => {
                let a: ControlAuthority = tc
                    .arg_str("authority")
                    .ok_or("missing `authority`")?
                    .parse()?;
                self.set_authority(caller, a);
                Ok(Some(json!({ "authority": a })))
            }
            TcId::SetHeater => {
                let h = arg_index(tc, "heater", HEATER_COUNT)?;
                let duty = tc.arg_f64("duty_pct").ok_or("missing number `duty_pct`")?;
                if !(0.0..=100.0).contains(&duty) {
                    return Err(format!("duty {duty} % outside [0, 100]"));
                }
                pool.htl_ctrlr
                    .update(caller, |c| c.manual_duty_pct[h] = duty);
                pool.htl_dev.write(caller, Self::device_command(tc, now));
                Ok(None)
            }
            TcId::PowerSwitch => {
                let s = arg_index(tc, "switch", SWITCH_COUNT)?;
                let want = match tc.args.get("on") {
                    Some(Value::Bool(b)) => Some(*b),
                    Some(Value::Null) | None => None,
                    Some(other) => return Err(format!("`on` must be a bool or null, got {other}")),
                };
                pool.pcu_dev.update(caller, |d| {
                    d.overrides[s] = want;
                    d.last_seq = Some(tc.seq);
                });
                Ok(None)
            }
            TcId::CalibrateImu => {
                let action = tc.arg_str("action").unwrap_or("calibrate");
                pool.nads_dev.update(caller, |d| {
                    match action {
                        "calibrate" => d.calibrate_requests += 1,
                        "restart" => d.restart_requests += 1,
                        other => return Err(format!("unknown IMU action `{other}`")),
                    }
                    d.last_seq = Some(tc.seq);
                    Ok(())
                })?;
                Ok(None)
            }
            TcId::SetTmRate => {
                let div = |key: &str| -> Result<Option<u32>, String> {
                    match tc.args.get(key) {
                        None => Ok(None),
                        Some(v) => match v.as_u64() {
                            Some(ms) if ms >= 1000 && ms % 1000 == 0 => {
                                Ok(Some((ms / 1000) as u32))
                            }
                            _ => Err(format!("`{key}` must be a positive multiple of 1000 ms")),
                        },
                    }
                };
                let (sc, hk) = (div("sc_period_ms")?, div("hk_period_ms")?);
                if sc.is_none() && hk.is_none() {
                    return Err("need `sc_period_ms` and/or `hk_period_ms`".into());
                }
                let tm = pool.ttc_tm_mode.update(caller, |m| {
                    if let Some(s) = sc {
                        m.sc_divider = s;
                    }
                    if let Some(h) = hk {
                        m.hk_divider = h;
                    }
                    *m
                });
                Ok(Some(
                    json!({ "sc_divider": tm.sc_divider, "hk_divider": tm.hk_divider }),
                ))
            }
            TcId::InjectEvent => {
                let kind: EventKind = tc.arg_str("kind").ok_or("missing `kind`")?.parse()?;
                let mut ev = Event::new(kind, now).with("injected_by_seq", tc.seq);
                if let Some(Value::Object(p)) = tc.args.get("payload") {
                    ev.payload
                        .extend(p.iter().map(|(k, v)| (k.clone(), v.clone())));
                }
                match pool.event_queue.put(caller, ev) {
                    PutResult::Accepted => Ok(None),
                    PutResult::Rejected => Err("event queue full".into()),
                }
            }
            TcId::Ping => {
                let reply = Event::new(EventKind::OperatorInjected, now)
                    .with("reply", "pong")
                    .with("seq", tc.seq);
                match pool.event_queue.put(caller, reply) {
                    PutResult::Accepted => Ok(Some(json!({ "pong": tc.seq }))),
                    PutResult::Rejected => Err("event queue full".into()),
                }
            }
        }
    }

    /// Applies one event and journals it with the resulting mode.
    pub fn handle_event(&self, caller: &Caller<'_>, ev: &Event) -> OperatingMode {
        let pool = &self.pool;
        let resulting = match ev.kind {
            EventKind::LinkLost => {
                self.set_authority(caller, ControlAuthority::Autonomous);
                pool.nads_mode.get(caller)
            }
            EventKind::LinkRestored => pool.nads_mode.get(caller),
            EventKind::FloatDetected
            | EventKind::CutoffDetected
            | EventKind::PressureAnomaly
            | EventKind::OperatorInjected => {
                let _g = self
                    .automaton
                    .lock()
                    .unwrap_or_else(PoisonError::into_inner);
                let current = pool.nads_mode.get(caller);
                let stim = Stimulus {
                    pressure_mbar: ev.number("pressure_mbar").unwrap_or(NO_PRESSURE),
                    pressure_rate_mbar_s: ev.number("pressure_rate_mbar_s").unwrap_or(0.0),
                    elapsed_in_mode_s: ev.number("elapsed_in_mode_s").unwrap_or(0.0),
                    event: Some(ev),
                    tc: None,
                };
                let next = mode_transition(current, &stim, &self.cfg).mode;
                propagate_mode(pool, caller, next, ev.kind.as_str());
                next
            }
        };
        pool.events.append(EventRecord {
            t_ms: pool.clock().now_ms(),
            kind: ev.kind,
            payload: ev.payload.clone(),
            resulting_mode: resulting,
        });
        resulting
    }
}

/// Releases a manager task while its queue holds a message.
pub struct QueueSource {
    pool: Arc<DataPool>,
    events: bool,
}

impl QueueSource {
    pub fn tc(pool: Arc<DataPool>) -> Arc<Self> {
        Arc::new(Self {
            pool,
            events: false,
        })
    }

    pub fn events(pool: Arc<DataPool>) -> Arc<Self> {
        Arc::new(Self { pool, events: true })
    }
}

impl ActivationSource for QueueSource {
    fn pending(&self) -> bool {
        if self.events {
            self.pool.event_queue.pending()
        } else {
            self.pool.tc_queue.pending()
        }
    }

    fn wait(&self, timeout: std::time::Duration) -> bool {
        if self.events {
            self.pool.event_queue.wait(timeout)
        } else {
            self.pool.tc_queue.wait(timeout)
        }
    }
}

/// Consumes one telecommand per activation and journals its executed ack.
pub struct TcHandler(pub Arc<Manager>);

#[async_trait(?Send)]
impl TaskBody for TcHandler {
    async fn run(&mut self, ctx: &TaskCtx) {
        let caller = ctx.caller();
        let pool = self.0.pool.clone();
        let Some(tc) = pool.tc_queue.try_take(&caller) else {
            return;
        };
        let outcome = self.0.execute(&caller, &tc);
        let (status, reason, result) = match outcome {
            Ok(r) => (AckStatus::Accepted, None, r),
            Err(e) => (AckStatus::Rejected, Some(e), None),
        };
        pool.acks.append(AckRecord {
            t_ms: pool.clock().now_ms(),
            seq: tc.seq,
            id: Some(tc.id),
            stage: AckStage::Executed,
            status,
            reason,
            result,
        });
    }
}

/// Consumes one event per activation.
pub struct EventHandler(pub Arc<Manager>);

#[async_trait(?Send)]
impl TaskBody for EventHandler {
    async fn run(&mut self, ctx: &TaskCtx) {
        let caller = ctx.caller();
        if let Some(ev) = self.0.pool.event_queue.try_take(&caller) {
            self.0.handle_event(&caller, &ev);
        }
    }
}
