//! Scriptable ground station speaking the onboard wire protocol over TCP.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Parser;
use gondola_core::ttc::{run_tcp_gs, GsScript, GsSession, TcpGsOptions};

#[derive(Parser)]
#[command(
    name = "gs-headless",
    about = "Headless ground station: runs a TC script and records a transcript"
)]
struct Cli {
    /// Onboard listen address.
    #[arg(long, default_value = "127.0.0.1:5070")]
    connect: String,
    /// JSON script of timed telecommands and link faults.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Directory for transcript.jsonl and gs_summary.json.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Stop after this many mission seconds.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    /// The onboard time scale, to keep mission time between frames.
    #[arg(long, default_value_t = 1.0)]
    time_scale: f64,
    /// Upper bound of the reconnect backoff, ms.
    #[arg(long, default_value_t = 2000)]
    max_backoff_ms: u64,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let script = match &cli.script {
        Some(p) => GsScript::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => GsScript::default(),
    };
    let mut session = GsSession::new(script);
    if let Some(dir) = &cli.record {
        std::fs::create_dir_all(dir)?;
        session = session.record_to(dir.join("transcript.jsonl"))?;
    }
    let mut opts = TcpGsOptions::new(cli.connect.clone(), cli.duration);
    opts.time_scale = cli.time_scale;
    opts.max_backoff = Duration::from_millis(cli.max_backoff_ms);
    let stop = Arc::new(AtomicBool::new(false));
    let (summary, entries) = run_tcp_gs(&opts, session, Some(&stop))?;
    stop.store(true, Ordering::Relaxed);
    let text = serde_json::to_string_pretty(&summary)?;
    if let Some(dir) = &cli.record {
        std::fs::write(dir.join("gs_summary.json"), format!("{text}\n"))?;
    }
    eprintln!("{} transcript entries", entries.len());
    println!("{text}");
    Ok(())
}
