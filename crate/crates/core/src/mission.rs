//! Composition of the onboard system: hardware, data pool, the nine onboard
//! tasks, the link hub and optionally an in-process ground station.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::Serialize;
use thiserror::Error;

use crate::datapool::{DataPool, ModeRecord, PoolError, QueueStats};
use crate::domain::names::*;
use crate::domain::{
    validate_task_set, MissionConfig, OperatingMode, TaskSet, TaskSpec, ValidationReport,
};
use crate::envsim::Profile;
use crate::executor::{
    ExecConfig, ExecError, ExecMode, Executor, RunArtifacts, TaskBody, TaskCtx, TaskSummary,
};
use crate::halsim::{Hal, HalConfig, HalError};
use crate::manager::{EventHandler, Manager, QueueSource, TcHandler};
use crate::subsystems::{apply_power_policy, switch_policy, Bodies, SubsystemEnv};
use crate::time::SimClock;
use crate::ttc::{
    virtual_link, BandwidthReport, GsScript, GsSession, GsSummary, LinkHub, LinkStatus, TcReceiver,
    TcpTransport, TmSender, Transport, VirtualGs,
};

/// Name of the in-process ground station task.
pub const GROUND_STATION: &str = "Ground Station";

#[derive(Debug, Error)]
pub enum MissionError {
    #[error(transparent)]
    Config(#[from] crate::domain::ConfigError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Hal(#[from] HalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Setup(String),
}

/// How the ground segment reaches the onboard software.
#[derive(Debug, Clone)]
pub enum LinkSetup {
    /// An in-process ground station running `script` over a memory pipe.
    Virtual(GsScript),
    /// Listen on a TCP address for an external ground station.
    Tcp(String),
}

#[derive(Debug, Clone)]
pub struct MissionOptions {
    pub cfg: MissionConfig,
    pub profile: Profile,
    pub duration_s: f64,
    pub mode: ExecMode,
    pub link: LinkSetup,
    /// Where logs and the run summary go; nothing is written without it.
    pub run_dir: Option<PathBuf>,
    /// Log every 100 Hz NADS cycle.
    pub nads_log: bool,
    /// Write the scheduling trace.
    pub trace: bool,
    pub realtime: bool,
    pub pin_cpu: Option<usize>,
}

impl MissionOptions {
    pub fn new(cfg: MissionConfig, profile: Profile, duration_s: f64) -> Self {
        Self {
            cfg,
            profile,
            duration_s,
            mode: ExecMode::Deterministic,
            link: LinkSetup::Virtual(GsScript::default()),
            run_dir: None,
            nads_log: false,
            trace: false,
            realtime: false,
            pin_cpu: None,
        }
    }

    pub fn threaded(mut self) -> Self {
        self.mode = ExecMode::Threaded;
        self
    }

    pub fn with_link(mut self, link: LinkSetup) -> Self {
        self.link = link;
        self
    }

    pub fn with_run_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.run_dir = Some(dir.into());
        self
    }
}

/// Contents of `run.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub exec_mode: ExecMode,
    pub duration_s: f64,
    pub wall_s: f64,
    pub time_scale: f64,
    pub profile: String,
    pub config: MissionConfig,
    pub validation: ValidationReport,
    pub tasks: BTreeMap<String, TaskSummary>,
    pub task_set: Vec<TaskSpec>,
    pub activations: u64,
    pub misses: u64,
    pub trace_events: u64,
    pub platform_notes: Vec<String>,
    pub final_mode: OperatingMode,
    pub modes: Vec<ModeRecord>,
    pub events: usize,
    pub acks: usize,
    pub tc_queue: QueueStats,
    pub event_queue: QueueStats,
    pub link: LinkStatus,
    pub bandwidth: BandwidthReport,
    pub ground_station: Option<GsSummary>,
    pub sc_frames: u64,
    pub hk_frames: u64,
}

pub struct MissionOutcome {
    pub summary: RunSummary,
    pub artifacts: RunArtifacts,
    pub pool: Arc<DataPool>,
    pub hal: Arc<Hal>,
    pub hub: Arc<LinkHub>,
    pub gs: Option<Arc<Mutex<GsSession>>>,
}

/// A fully wired onboard system, ready to run once.
pub struct Mission {
    opts: MissionOptions,
    exec: Executor,
    onboard: TaskSet,
    pool: Arc<DataPool>,
    hal: Arc<Hal>,
    hub: Arc<LinkHub>,
    gs: Option<Arc<Mutex<GsSession>>>,
    listen: Option<SocketAddr>,
    tm_counts: Arc<Mutex<(u64, u64)>>,
}

/// TM Sender wrapper recording its frame counters on drop.
struct CountingTm(TmSender, Arc<Mutex<(u64, u64)>>);

#[async_trait::async_trait(?Send)]
impl TaskBody for CountingTm {
    async fn run(&mut self, ctx: &TaskCtx) {
        self.0.run(ctx).await;
    }
}

impl Drop for CountingTm {
    fn drop(&mut self) {
        *self
            .1
            .lock()
            .unwrap_or_else(std::sync::PoisonError::into_inner) =
            (self.0.sc_count(), self.0.hk_count());
    }
}

impl Mission {
    pub fn build(opts: MissionOptions) -> Result<Self, MissionError> {
        opts.cfg.validate()?;
        if !(opts.duration_s > 0.0 && opts.duration_s.is_finite()) {
            return Err(MissionError::Setup("duration must be positive".into()));
        }
        let clock = match opts.mode {
            ExecMode::Deterministic => SimClock::new_virtual(),
            ExecMode::Threaded => SimClock::new_scaled(opts.cfg.time_scale),
        };
        if let Some(d) = &opts.run_dir {
            std::fs::create_dir_all(d)?;
        }
        let cfg = Arc::new(opts.cfg.clone());
        let set = TaskSet::runtime();
        let pool = Arc::new(DataPool::new(clock.clone(), set.tasks(), &cfg)?);
        let mut hal_cfg = HalConfig::default();
        hal_cfg.world.seed = cfg.seed;
        hal_cfg.barometer_noise_mbar = cfg.barometer_noise_mbar;
        let hal = Arc::new(Hal::new(clock.clone(), opts.profile.clone(), hal_cfg));
        apply_power_policy(&hal, switch_policy(OperatingMode::PreLaunch))?;

        let dir = opts.run_dir.as_deref();
        if let Some(d) = dir {
            pool.events.attach_file(d.join("events.jsonl"))?;
            pool.acks.attach_file(d.join("tc_acks.jsonl"))?;
            pool.modes.attach_file(d.join("modes.jsonl"))?;
            let mut f = std::fs::File::create(d.join("profile.csv"))?;
            opts.profile
                .write_csv(&mut f)
                .map_err(|e| MissionError::Setup(e.to_string()))?;
        }

        let (transport, gs_end, listen): (Box<dyn Transport>, _, _) = match &opts.link {
            LinkSetup::Virtual(_) => {
                let (t, end) = virtual_link();
                (Box::new(t), Some(end), None)
            }
            LinkSetup::Tcp(addr) => {
                if opts.mode == ExecMode::Deterministic {
                    return Err(MissionError::Setup(
                        "a TCP link needs a threaded run".into(),
                    ));
                }
                let t = TcpTransport::bind(addr.as_str())?;
                let local = t.local_addr()?;
                (Box::new(t), None, Some(local))
            }
        };
        let hub = Arc::new(LinkHub::new(
            transport,
            clock.clone(),
            cfg.heartbeat_timeout_ms,
        ));

        let trace_path = match (opts.trace, dir) {
            (true, Some(d)) => Some(d.join("trace.jsonl")),
            _ => None,
        };
        let mut exec = Executor::new(
            clock,
            ExecConfig {
                trace_path,
                keep_trace: false,
                realtime: opts.realtime,
                pin_cpu: opts.pin_cpu,
            },
        );
        let spec = |n: &str| set.get(n).expect("runtime task").clone();
        let env = SubsystemEnv::new(hal.clone(), pool.clone(), cfg.clone());
        let bodies = Bodies::new(&env, dir, opts.nads_log)?;
        exec.register_cyclic(spec(IMU_MEASURER), Box::new(bodies.imu))?;
        exec.register_cyclic(spec(GPS_MEASURER), Box::new(bodies.gps))?;
        exec.register_cyclic(spec(HTL_MANAGER), Box::new(bodies.htl))?;
        exec.register_cyclic(spec(SDPU_MEASURER), Box::new(bodies.sdpu))?;
        exec.register_cyclic(spec(PCU_MANAGER), Box::new(bodies.pcu))?;

        let mgr = Manager::new(pool.clone(), cfg.clone());
        let mut tm = TmSender::new(hub.clone(), pool.clone());
        if let Some(d) = dir {
            tm = tm.with_logs(d)?;
        }
        let tm_counts = Arc::new(Mutex::new((0, 0)));
        exec.register_cyclic(spec(TM_SENDER), Box::new(CountingTm(tm, tm_counts.clone())))?;
        exec.register_sporadic(
            spec(TC_RECEIVER),
            hub.clone(),
            Box::new(TcReceiver::new(hub.clone(), pool.clone())),
        )?;
        exec.register_sporadic(
            spec(TC_HANDLER),
            QueueSource::tc(pool.clone()),
            Box::new(TcHandler(mgr.clone())),
        )?;
        exec.register_sporadic(
            spec(EVENT_HANDLER),
            QueueSource::events(pool.clone()),
            Box::new(EventHandler(mgr)),
        )?;

        let gs = match (&opts.link, gs_end) {
            (LinkSetup::Virtual(script), Some(end)) => {
                let mut session = GsSession::new(script.clone());
                if let Some(d) = dir {
                    session = session.record_to(d.join("transcript.jsonl"))?;
                }
                let body = VirtualGs::new(end, session);
                let handle = body.session();
                exec.register_cyclic(
                    TaskSpec::cyclic(GROUND_STATION, 1000, 1000, 0),
                    Box::new(body),
                )?;
                Some(handle)
            }
            _ => None,
        };

        Ok(Self {
            opts,
            exec,
            onboard: set,
            pool,
            hal,
            hub,
            gs,
            listen,
            tm_counts,
        })
    }

    /// The bound TCP address, when listening.
    pub fn listen_addr(&self) -> Option<SocketAddr> {
        self.listen
    }

    pub fn pool(&self) -> &Arc<DataPool> {
        &self.pool
    }

    pub fn run(mut self) -> Result<MissionOutcome, MissionError> {
        let mut art = self.exec.run(self.opts.duration_s, self.opts.mode)?;
        art.validation = validate_task_set(self.onboard.tasks()).unwrap_or_default();
        self.hub.close();
        for r in [
            self.pool.events.flush(),
            self.pool.acks.flush(),
            self.pool.modes.flush(),
        ] {
            r?;
        }
        let gs_summary = self.gs.as_ref().map(|g| {
            let mut g = g.lock().unwrap_or_else(std::sync::PoisonError::into_inner);
            g.flush();
            g.summary(self.opts.duration_s)
        });
        let (sc_frames, hk_frames) = *self
            .tm_counts
            .lock()
            .unwrap_or_else(std::sync::PoisonError::into_inner);
        let modes = self.pool.modes.all();
        let summary = RunSummary {
            exec_mode: self.opts.mode,
            duration_s: self.opts.duration_s,
            wall_s: art.wall_s,
            time_scale: self.opts.cfg.time_scale,
            profile: self.opts.profile.name().to_owned(),
            config: self.opts.cfg.clone(),
            validation: art.validation.clone(),
            tasks: art.summary.clone(),
            task_set: self.onboard.tasks().to_vec(),
            activations: art.total_activations(),
            misses: art.misses(),
            trace_events: art.trace_events,
            platform_notes: art.platform_notes.clone(),
            final_mode: self.pool.nads_mode.get(&crate::datapool::Caller::system()),
            modes,
            events: self.pool.events.len(),
            acks: self.pool.acks.len(),
            tc_queue: self.pool.tc_queue.stats(),
            event_queue: self.pool.event_queue.stats(),
            link: self.hub.status(),
            bandwidth: self.hub.bandwidth(),
            ground_station: gs_summary,
            sc_frames,
            hk_frames,
        };
        if let Some(d) = &self.opts.run_dir {
            write_run_dir(d, &summary, &art)?;
        }
        Ok(MissionOutcome {
            summary,
            artifacts: art,
            pool: self.pool,
            hal: self.hal,
            hub: self.hub,
            gs: self.gs,
        })
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(std::io::Error::other)?;
    std::fs::write(path, text + "\n")
}

fn write_run_dir(dir: &Path, summary: &RunSummary, art: &RunArtifacts) -> std::io::Result<()> {
    art.write_activation_logs(dir.join("activations"))?;
    write_json(&dir.join("bandwidth.json"), &summary.bandwidth)?;
    write_json(&dir.join("run.json"), summary)
}

/// Builds and runs in one step.
pub fn run_mission(opts: MissionOptions) -> Result<MissionOutcome, MissionError> {
    Mission::build(opts)?.run()
}
