//! Drift, error and acceptance analytics over run artifacts.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use gondola_core::verify::{
    acceptance_report, drift_indexed, load_log_times, load_measured, mse, pct_error, ReferenceTable,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "verify", about = "Verification analytics for gondola runs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Record-time drift of a periodic log.
    Drift {
        #[arg(long)]
        log: PathBuf,
        /// Nominal period, s.
        #[arg(long)]
        period: f64,
    },
    /// Percentage errors and MSE of a reference table.
    Mse {
        /// Reference CSV with `theoretical` and `actual` columns.
        #[arg(long)]
        fixture: PathBuf,
        /// Measured values keyed like the fixture; replaces its `actual` column.
        #[arg(long)]
        measured: Option<PathBuf>,
    },
    /// Evaluate every acceptance criterion on a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Drift { log, period } => {
            let entries =
                load_log_times(&log).with_context(|| format!("reading {}", log.display()))?;
            let task = log
                .file_stem()
                .map_or("log".into(), |s| s.to_string_lossy().into_owned());
            let s = drift_indexed(&task, &entries, period)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Cmd::Mse { fixture, measured } => {
            let table = ReferenceTable::load(&fixture)?;
            let pairs = match &measured {
                Some(p) => table.pairs_with(&load_measured(std::fs::File::open(p)?)?)?,
                None => table.pairs(),
            };
            let rows: Vec<_> = table
                .rows
                .iter()
                .zip(&pairs)
                .map(|(r, (tv, av))| {
                    json!({
                        "row": r.label(),
                        "theoretical": tv,
                        "actual": av,
                        "error_pct": pct_error(*tv, *av).ok(),
                        "printed_error_pct": r.printed_error_pct,
                    })
                })
                .collect();
            let out = json!({ "n": pairs.len(), "mse": mse(&pairs)?, "rows": rows });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Cmd::Report { run } => {
            let r = acceptance_report(&run)?;
            print!("{}", r.summary());
            if !r.passed {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
