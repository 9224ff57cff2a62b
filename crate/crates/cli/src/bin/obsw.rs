//! Onboard software runner.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gondola_core::domain::{compute_ceilings, validate_task_set, MissionConfig, ObjectId, TaskSet};
use gondola_core::envsim::{
    make_flight_profile, make_stationary_profile, make_tvac_profile, FlightProfileConfig, Profile,
    TvacParams, GROUND_PRESSURE_MBAR, REFERENCE_LAT, REFERENCE_LON,
};
use gondola_core::executor::ExecMode;
use gondola_core::mission::{LinkSetup, Mission, MissionOptions};
use gondola_core::ttc::GsScript;
use gondola_core::verify::acceptance_report;

#[derive(Parser)]
#[command(
    name = "obsw",
    about = "Run the gondola onboard software against simulated hardware"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Tvac,
    Flight,
    Ground,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Flight,
    Tvac,
}

#[derive(Clone, Copy, ValueEnum)]
enum Engine {
    Deterministic,
    Threaded,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a mission.
    Run {
        /// Built-in environment profile.
        #[arg(long, value_enum, default_value = "tvac")]
        profile: Kind,
        /// Profile CSV (`t_s,pressure_mbar,temp_c,lat,lon,alt_m`); overrides --profile.
        #[arg(long)]
        profile_csv: Option<PathBuf>,
        /// Mission configuration JSON; defaults to the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Mission seconds; defaults to the profile length.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, value_enum, default_value = "deterministic")]
        engine: Engine,
        /// Listen for a ground station on this address (threaded engine).
        #[arg(long, conflicts_with = "script")]
        listen: Option<String>,
        /// Script for the in-process ground station.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Override the configured time scale.
        #[arg(long)]
        time_scale: Option<f64>,
        #[arg(long)]
        nads_log: bool,
        #[arg(long)]
        trace: bool,
        /// Request SCHED_FIFO priorities (threaded engine).
        #[arg(long)]
        realtime: bool,
        #[arg(long)]
        pin_cpu: Option<usize>,
        /// Evaluate the acceptance report on the run directory afterwards.
        #[arg(long, requires = "run_dir")]
        report: bool,
    },
    /// Write a built-in profile as CSV.
    Profile {
        #[arg(long, value_enum, default_value = "tvac")]
        kind: Kind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the task set, ceilings and scheduling review.
    Tasks {
        /// The set as executed, including the runtime accesses.
        #[arg(long)]
        runtime: bool,
    },
}

fn builtin(kind: Kind) -> Result<Profile> {
    Ok(match kind {
        Kind::Tvac => make_tvac_profile(&TvacParams::default())?,
        Kind::Flight => make_flight_profile(&FlightProfileConfig::default())?,
        Kind::Ground => {
            make_stationary_profile(GROUND_PRESSURE_MBAR, REFERENCE_LAT, REFERENCE_LON, 3600.0)?
        }
    })
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run {
            profile,
            profile_csv,
            config,
            preset,
            duration,
            engine,
            listen,
            script,
            run_dir,
            time_scale,
            nads_log,
            trace,
            realtime,
            pin_cpu,
            report,
        } => {
            let prof = match &profile_csv {
                Some(p) => {
                    let f = std::fs::File::open(p)
                        .with_context(|| format!("opening {}", p.display()))?;
                    Profile::read_csv(
                        p.file_stem()
                            .map_or("custom".into(), |s| s.to_string_lossy().into_owned()),
                        f,
                    )?
                }
                None => builtin(profile)?,
            };
            let mut cfg = match (&config, preset, profile) {
                (Some(p), _, _) => MissionConfig::load(p)?,
                (None, Some(Preset::Flight), _) => MissionConfig::flight(),
                (None, Some(Preset::Tvac), _) | (None, None, Kind::Tvac) => MissionConfig::tvac(),
                (None, None, _) => MissionConfig::flight(),
            };
            if let Some(s) = time_scale {
                cfg.time_scale = s;
            }
            let link = match (listen, script) {
                (Some(addr), _) => LinkSetup::Tcp(addr),
                (None, Some(p)) => LinkSetup::Virtual(GsScript::load(&p)?),
                (None, None) => LinkSetup::Virtual(GsScript::default()),
            };
            let mode = match engine {
                Engine::Deterministic => ExecMode::Deterministic,
                Engine::Threaded => ExecMode::Threaded,
            };
            if matches!(link, LinkSetup::Tcp(_)) && mode == ExecMode::Deterministic {
                bail!("--listen needs --engine threaded");
            }
            let dur = duration.unwrap_or_else(|| prof.duration());
            let mut opts = MissionOptions::new(cfg, prof, dur).with_link(link);
            opts.mode = mode;
            opts.run_dir = run_dir.clone();
            opts.nads_log = nads_log;
            opts.trace = trace;
            opts.realtime = realtime;
            opts.pin_cpu = pin_cpu;
            let mission = Mission::build(opts)?;
            if let Some(addr) = mission.listen_addr() {
                eprintln!("listening on {addr}");
            }
            let out = mission.run()?;
            let s = &out.summary;
            eprintln!(
                "{:?} run of {:.0} s in {:.2} s wall: {} activations, {} misses, final mode {}",
                s.exec_mode, s.duration_s, s.wall_s, s.activations, s.misses, s.final_mode
            );
            for n in &s.platform_notes {
                eprintln!("note: {n}");
            }
            for m in &s.modes {
                eprintln!(
                    "{:>10.3} s  {} -> {}",
                    m.t_ms as f64 / 1000.0,
                    m.previous,
                    m.mode
                );
            }
            if report {
                let dir = run_dir.expect("clap enforces --run-dir");
                let r = acceptance_report(&dir)?;
                print!("{}", r.summary());
                if !r.passed {
                    std::process::exit(1);
                }
            } else {
                println!(
                    "{}",
                    serde_json::to_string(&serde_json::json!({
                        "final_mode": s.final_mode,
                        "activations": s.activations,
                        "misses": s.misses,
                        "wall_s": s.wall_s,
                        "bandwidth": s.bandwidth,
                    }))?
                );
            }
        }
        Cmd::Profile { kind, out } => {
            let p = builtin(kind)?;
            match out {
                Some(path) => std::fs::write(&path, p.to_csv_string())?,
                None => print!("{}", p.to_csv_string()),
            }
        }
        Cmd::Tasks { runtime } => {
            let set = if runtime {
                TaskSet::runtime()
            } else {
                TaskSet::documented()
            };
            println!(
                "{:<14} {:<9} {:>8} {:>8} {:>4}  accesses",
                "task", "kind", "T/MIAT", "D", "prio"
            );
            for t in set.tasks() {
                let acc: Vec<&str> = t.accesses.iter().map(ObjectId::as_str).collect();
                println!(
                    "{:<14} {:<9} {:>8} {:>8} {:>4}  {}",
                    t.name,
                    format!("{:?}", t.kind),
                    t.period_or_miat_ms,
                    t.deadline_ms,
                    t.priority,
                    acc.join(", ")
                );
            }
            println!();
            let ceilings = compute_ceilings(set.tasks(), &ObjectId::ALL)?;
            for (obj, c) in ceilings.iter() {
                println!("ceiling {:<12} {c}", obj.as_str());
            }
            println!();
            let v = validate_task_set(set.tasks())?;
            for w in &v.warnings {
                println!("warning: {w}");
            }
            for e in &v.errors {
                println!("error: {e}");
            }
        }
    }
    Ok(())
}
