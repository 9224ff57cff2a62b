use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::fixtures::{check_rows, embedded, run_bench, table_mse, ReferenceTable};
use super::metrics::{drift_of_activations, drift_stats};
use super::VerifyError;
use crate::datapool::{BoundedQueue, Caller, DataPool, PutResult};
use crate::domain::{
    compute_ceilings, Event, EventKind, MissionConfig, ObjectId, OperatingMode, TaskKind, TaskSet,
    TaskSpec,
};
use crate::envsim::{make_stationary_profile, REFERENCE_LAT, REFERENCE_LON};
use crate::executor::{read_activation_csv, task_slug};
use crate::halsim::{FixtureRow, Hal, HalConfig, Rtu, TestBenchFixture};
use crate::subsystems::{GpsMeasurer, SubsystemEnv};
use crate::time::SimClock;
use crate::ttc::read_jsonl;

/// Wall-clock budget of a deterministic TVAC replay, s.
pub const MODE_RUN_WALL_LIMIT_S: f64 = 180.0;
/// Decimal places to which a recomputed percentage must match.
pub const PCT_DECIMALS: i32 = 4;
/// Relative agreement of the MSE with direct summation.
pub const MSE_REL_TOL: f64 = 1e-12;
pub const MISS_RATE_MAX: f64 = 0.01;
pub const DRIFT_MAX_S: f64 = 0.2;
/// Simulated time of 8 conversions at 8 samples/s, ms.
pub const EIGHT_CONVERSIONS_MIN_MS: f64 = 1000.0;
/// Position agreement with the reference fix, degrees.
pub const GPS_POS_TOL_DEG: f64 = 1e-6;
pub const GPS_FIX_RATE_HZ: f64 = 5.0;
pub const GPS_FIX_RATE_TOL_HZ: f64 = 0.1;
pub const QUEUE_CAPACITY: usize = 10;
pub const QUOTA_KBPS: f64 = 500.0;
/// Reference link usage of the original system, kbps, printed only.
pub const REFERENCE_DOWNLINK_KBPS: f64 = 1.93;
pub const REFERENCE_UPLINK_KBPS: f64 = 0.56;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Pass,
    Fail,
    NotEvaluable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub id: String,
    pub status: Status,
    pub detail: String,
    pub measured: Value,
}

impl Verdict {
    fn new(id: &str, pass: bool, detail: String, measured: Value) -> Self {
        Self {
            id: id.into(),
            status: if pass { Status::Pass } else { Status::Fail },
            detail,
            measured,
        }
    }

    fn not_evaluable(id: &str, why: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            status: Status::NotEvaluable,
            detail: why.into(),
            measured: Value::Null,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub run_dir: PathBuf,
    pub verdicts: Vec<Verdict>,
    pub passed: bool,
}

impl Report {
    pub fn get(&self, id: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.id == id)
    }

    pub fn summary(&self) -> String {
        let mut s = format!("acceptance report for {}\n", self.run_dir.display());
        for v in &self.verdicts {
            let tag = match v.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::NotEvaluable => "N/E ",
            };
            let _ = writeln!(s, "{tag} {:<22} {}", v.id, v.detail);
        }
        let _ = writeln!(s, "overall: {}", if self.passed { "PASS" } else { "FAIL" });
        s
    }

    /// Writes `verdict.json` and `summary.txt` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        let dir = dir.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(dir.join("verdict.json"), text + "\n")?;
        std::fs::write(dir.join("summary.txt"), self.summary())
    }
}

/// Evaluates every criterion against the artifacts in `run_dir` and, if
/// the directory exists, writes the verdict files into it.
pub fn acceptance_report(run_dir: impl AsRef<Path>) -> Result<Report, VerifyError> {
    let dir = run_dir.as_ref();
    let run = RunDir::new(dir);
    let verdicts = vec![
        mode_sequence(&run),
        pct_error_fixtures(),
        mse_oracle(),
        drift_instrument(&run),
        responsiveness(&run),
        acquisition_chain(),
        gps(&run),
        queues_ceilings(),
        link_fault_tolerance(&run),
        bandwidth(&run),
    ];
    let passed = verdicts.iter().all(Verdict::passed);
    let report = Report {
        run_dir: dir.to_path_buf(),
        verdicts,
        passed,
    };
    if dir.is_dir() {
        report.write_to(dir)?;
    }
    Ok(report)
}

struct RunDir<'a> {
    dir: &'a Path,
}

type Missing = String;

impl<'a> RunDir<'a> {
    fn new(dir: &'a Path) -> Self {
        Self { dir }
    }

    fn path(&self, name: &str) -> Result<PathBuf, Missing> {
        let p = self.dir.join(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(format!("missing artifact {name}"))
        }
    }

    fn jsonl(&self, name: &str) -> Result<Vec<Value>, Missing> {
        read_jsonl(self.path(name)?).map_err(|e| format!("{name}: {e}"))
    }

    fn json(&self, name: &str) -> Result<Value, Missing> {
        let text = std::fs::read_to_string(self.path(name)?).map_err(|e| format!("{name}: {e}"))?;
        serde_json::from_str(&text).map_err(|e| format!("{name}: {e}"))
    }

    fn run_json(&self) -> Result<Value, Missing> {
        self.json("run.json")
    }

    fn task_set(&self, run: &Value) -> Result<Vec<TaskSpec>, Missing> {
        serde_json::from_value(run["task_set"].clone())
            .map_err(|e| format!("run.json task_set: {e}"))
    }

    /// `(t_s, mean barometer pressure)` per SDPU cycle.
    fn pressures(&self) -> Result<Vec<(f64, f64)>, Missing> {
        let p = self.path("el.csv")?;
        let mut rd = csv::Reader::from_path(&p).map_err(|e| format!("el.csv: {e}"))?;
        let h = rd.headers().map_err(|e| format!("el.csv: {e}"))?.clone();
        let col = |n: &str| {
            h.iter()
                .position(|c| c == n)
                .ok_or(format!("el.csv: no `{n}` column"))
        };
        let (t, a, b) = (col("t_s")?, col("baro_a_mbar")?, col("baro_b_mbar")?);
        let mut out = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| format!("el.csv: {e}"))?;
            let vals: Vec<f64> = [a, b]
                .iter()
                .filter_map(|i| rec[*i].parse::<f64>().ok())
                .collect();
            if let (Ok(ts), false) = (rec[t].parse::<f64>(), vals.is_empty()) {
                out.push((ts, vals.iter().sum::<f64>() / vals.len() as f64));
            }
        }
        Ok(out)
    }
}

macro_rules! need {
    ($id:expr, $e:expr) => {
        match $e {
            Ok(v) => v,
            Err(why) => return Verdict::not_evaluable($id, why),
        }
    };
}

fn sdpu_period_s(tasks: &[TaskSpec]) -> f64 {
    tasks
        .iter()
        .find(|t| t.name == crate::domain::names::SDPU_MEASURER)
        .map_or(1.0, |t| t.period_or_miat_ms as f64 / 1000.0)
}

/// TVAC replay walks the whole chain at the right pressures and times.
fn mode_sequence(run: &RunDir<'_>) -> Verdict {
    const ID: &str = "mode_sequence";
    let info = need!(ID, run.run_json());
    if info["profile"] != "tvac" {
        return Verdict::not_evaluable(
            ID,
            format!("run profile is {}, not a TVAC replay", info["profile"]),
        );
    }
    let modes = need!(ID, run.jsonl("modes.jsonl"));
    let pressures = need!(ID, run.pressures());
    let tasks = need!(ID, run.task_set(&info));
    let tol = sdpu_period_s(&tasks);
    let cfg = MissionConfig::default();
    let delta = MissionConfig::tvac().float2_delta_s;

    let seq: Vec<(f64, OperatingMode)> = modes
        .iter()
        .filter_map(|m| {
            let t = m["t_ms"].as_f64()? / 1000.0;
            Some((t, serde_json::from_value(m["mode"].clone()).ok()?))
        })
        .collect();
    let visited: Vec<OperatingMode> = seq.iter().map(|(_, m)| *m).collect();
    let chain = &OperatingMode::CHAIN[1..];
    let entry = |m: OperatingMode| seq.iter().find(|(_, x)| *x == m).map(|(t, _)| *t);
    let first_below = |thr: f64, inclusive: bool| {
        pressures
            .iter()
            .find(|(_, p)| if inclusive { *p <= thr } else { *p < thr })
            .map(|(t, _)| *t)
    };
    let mut problems = Vec::new();
    if visited != chain {
        problems.push(format!("visited {visited:?}"));
    }
    let check = |what: &str, got: Option<f64>, want: Option<f64>, problems: &mut Vec<String>| match (
        got, want,
    ) {
        (Some(g), Some(w)) if (g - w).abs() <= tol + 1e-9 => {}
        (g, w) => problems.push(format!(
            "{what}: entered {g:?} s, expected {w:?} s ± {tol} s"
        )),
    };
    let a1 = entry(OperatingMode::Ascent1);
    let f1 = entry(OperatingMode::Float1);
    let f2 = entry(OperatingMode::Float2);
    check(
        "Ascent1",
        a1,
        first_below(cfg.ascent1_mbar, false),
        &mut problems,
    );
    check(
        "Float1",
        f1,
        first_below(cfg.float1_mbar, true),
        &mut problems,
    );
    check("Float2", f2, f1.map(|t| t + delta), &mut problems);
    let wall = info["wall_s"].as_f64().unwrap_or(f64::INFINITY);
    if info["exec_mode"] == "Deterministic" && wall >= MODE_RUN_WALL_LIMIT_S {
        problems.push(format!("wall {wall:.1} s ≥ {MODE_RUN_WALL_LIMIT_S} s"));
    }
    let measured = json!({
        "sequence": seq.iter().map(|(t, m)| json!({ "t_s": t, "mode": m })).collect::<Vec<_>>(),
        "float2_after_float1_s": f1.zip(f2).map(|(a, b)| b - a),
        "wall_s": wall,
    });
    let detail = if problems.is_empty() {
        format!(
            "PreLaunch→…→Shutdown; Float2 {:.3} s after Float1; wall {wall:.2} s",
            f1.zip(f2).map_or(f64::NAN, |(a, b)| b - a)
        )
    } else {
        problems.join("; ")
    };
    Verdict::new(ID, problems.is_empty(), detail, measured)
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let k = 10f64.powi(decimals);
    (x * k).round() / k
}

/// True when `computed` rounds to `printed` at [`PCT_DECIMALS`].
pub fn matches_printed(computed: f64, printed: f64) -> bool {
    (round_to(computed, PCT_DECIMALS) - printed).abs() < 0.5 * 10f64.powi(-PCT_DECIMALS)
}

fn pct_error_fixtures() -> Verdict {
    const ID: &str = "pct_error_fixtures";
    let mut total = 0;
    let mut mismatches = Vec::new();
    for (name, csv) in [
        ("tmu", embedded::TMU_REFERENCE),
        ("sdpu", embedded::SDPU_REFERENCE),
        ("pcu", embedded::PCU_REFERENCE),
    ] {
        let table = need!(
            ID,
            ReferenceTable::from_csv(csv.as_bytes()).map_err(|e| e.to_string())
        );
        let rows = need!(ID, check_rows(&table).map_err(|e| e.to_string()));
        total += rows.len();
        for r in rows
            .iter()
            .filter(|r| !matches_printed(r.computed_pct, r.printed_pct))
        {
            mismatches.push(json!({
                "table": name,
                "row": r.label,
                "computed_pct": round_to(r.computed_pct, PCT_DECIMALS),
                "printed_pct": r.printed_pct,
            }));
        }
    }
    let detail = format!(
        "{}/{total} rows reproduce the printed error to {PCT_DECIMALS} decimals",
        total - mismatches.len()
    );
    Verdict::new(
        ID,
        mismatches.is_empty() && total == 36,
        detail,
        json!({ "rows": total, "mismatches": mismatches }),
    )
}

fn mse_oracle() -> Verdict {
    const ID: &str = "mse_oracle";
    let table = need!(
        ID,
        ReferenceTable::from_csv(embedded::TMU_REFERENCE.as_bytes()).map_err(|e| e.to_string())
    );
    let got = need!(ID, table_mse(&table).map_err(|e| e.to_string()));
    // direct summation, accumulated in the opposite order
    let mut acc = 0.0;
    for (tv, av) in table.pairs().iter().rev() {
        let d = tv - av;
        acc += d * d;
    }
    let oracle = acc / table.rows.len() as f64;
    let rel = ((got - oracle) / oracle).abs();
    Verdict::new(
        ID,
        rel <= MSE_REL_TOL,
        format!(
            "MSE over {} printed rows {got:.6e} V² vs summation {oracle:.6e} (rel {rel:.1e}); the 28-channel headline 9.6475e-5 needs unprinted rows",
            table.rows.len()
        ),
        json!({ "mse": got, "oracle": oracle, "relative_error": rel, "headline_28ch": 9.6475e-5 }),
    )
}

fn drift_instrument(run: &RunDir<'_>) -> Verdict {
    const ID: &str = "drift_instrument";
    let mut problems = Vec::new();
    match drift_stats("synthetic", &[0.0, 1.0, 2.1, 3.0], 1.0) {
        Ok(s) if (s.max_drift - 0.1).abs() < 1e-12 && (s.avg_drift - 0.025).abs() < 1e-12 => {}
        other => problems.push(format!("synthetic log gave {other:?}")),
    }
    match drift_stats("periodic", &[5.0, 5.5, 6.0, 6.5], 0.5) {
        Ok(s) if s.max_drift == 0.0 && s.avg_drift == 0.0 => {}
        other => problems.push(format!("periodic log gave {other:?}")),
    }
    let info = need!(ID, run.run_json());
    let tasks = need!(ID, run.task_set(&info));
    let deterministic = info["exec_mode"] == "Deterministic";
    let mut worst = 0.0f64;
    let mut checked = 0;
    for t in tasks.iter().filter(|t| t.kind == TaskKind::Cyclic) {
        let p = need!(
            ID,
            run.path(&format!("activations/{}.csv", task_slug(&t.name)))
        );
        let recs = need!(ID, read_activation_csv(p).map_err(|e| e.to_string()));
        if recs.len() < 2 {
            continue;
        }
        let s = need!(
            ID,
            drift_of_activations(&t.name, &recs, t.period_or_miat_ms as f64 / 1000.0)
                .map_err(|e| e.to_string())
        );
        worst = worst.max(s.max_drift);
        checked += 1;
    }
    if deterministic && worst != 0.0 {
        problems.push(format!("deterministic run shows drift {worst:e} s"));
    }
    let detail = if problems.is_empty() {
        format!(
            "hand-computed logs exact; {checked} cyclic logs, max drift {worst:.3e} s ({})",
            if deterministic {
                "deterministic, must be 0"
            } else {
                "threaded"
            }
        )
    } else {
        problems.join("; ")
    };
    Verdict::new(
        ID,
        problems.is_empty(),
        detail,
        json!({ "max_drift_s": worst, "logs": checked }),
    )
}

fn responsiveness(run: &RunDir<'_>) -> Verdict {
    const ID: &str = "responsiveness";
    let info = need!(ID, run.run_json());
    let tasks = need!(ID, run.task_set(&info));
    let summaries: BTreeMap<String, Value> =
        serde_json::from_value(info["tasks"].clone()).unwrap_or_default();
    let mut activations = 0u64;
    let mut misses = 0u64;
    let mut worst = 0.0f64;
    let mut silent = Vec::new();
    for t in &tasks {
        let s = summaries.get(&t.name);
        let n = s.and_then(|s| s["activations"].as_u64()).unwrap_or(0);
        activations += n;
        misses += s.and_then(|s| s["misses"].as_u64()).unwrap_or(0);
        if t.kind == TaskKind::Cyclic {
            if n == 0 {
                silent.push(t.name.clone());
                continue;
            }
            let p = need!(
                ID,
                run.path(&format!("activations/{}.csv", task_slug(&t.name)))
            );
            let recs = need!(ID, read_activation_csv(p).map_err(|e| e.to_string()));
            if recs.len() >= 2 {
                if let Ok(d) =
                    drift_of_activations(&t.name, &recs, t.period_or_miat_ms as f64 / 1000.0)
                {
                    worst = worst.max(d.max_drift);
                }
            }
        }
    }
    let rate = if activations == 0 {
        1.0
    } else {
        misses as f64 / activations as f64
    };
    let pass = silent.is_empty() && rate < MISS_RATE_MAX && worst < DRIFT_MAX_S;
    let mode = info["exec_mode"].as_str().unwrap_or("?").to_owned();
    let mut detail = format!(
        "{mode}, {:.0} s: {activations} activations, miss rate {:.3} %, max |drift| {worst:.4e} s",
        info["duration_s"].as_f64().unwrap_or(0.0),
        rate * 100.0
    );
    if !silent.is_empty() {
        let _ = write!(detail, "; never ran: {}", silent.join(", "));
    }
    Verdict::new(
        ID,
        pass,
        detail,
        json!({ "exec_mode": mode, "activations": activations, "misses": misses, "miss_rate": rate, "max_drift_s": worst }),
    )
}

fn acquisition_chain() -> Verdict {
    const ID: &str = "acquisition_chain";
    let mut problems = Vec::new();
    let mut measured = serde_json::Map::new();
    for (rtu, csv, channels) in [
        (Rtu::Tmu, embedded::TMU_BENCH, 28),
        (Rtu::Sdpu, embedded::SDPU_BENCH, 10),
    ] {
        let fixture = need!(
            ID,
            TestBenchFixture::from_csv(csv.as_bytes()).map_err(|e| e.to_string())
        );
        let run = need!(ID, run_bench(rtu, &fixture).map_err(|e| e.to_string()));
        let distinct: std::collections::BTreeSet<_> =
            run.readings.iter().map(|r| (r.mux, r.channel)).collect();
        let worst = run
            .readings
            .iter()
            .map(|r| (r.measured_v - r.fixture_v).abs())
            .fold(0.0, f64::max);
        let bad = run.readings.iter().filter(|r| !r.within_one_lsb()).count();
        if distinct.len() != channels || bad > 0 {
            problems.push(format!(
                "{rtu:?}: {} channels, {bad} beyond 1 LSB",
                distinct.len()
            ));
        }
        measured.insert(
            format!("{rtu:?}").to_lowercase(),
            json!({ "channels": distinct.len(), "worst_abs_v": worst }),
        );
    }
    let eight: Vec<FixtureRow> = (0..8)
        .map(|ch| FixtureRow {
            mux: 0,
            channel: ch,
            volts: 1.0,
        })
        .collect();
    let fixture = need!(ID, TestBenchFixture::new(eight).map_err(|e| e.to_string()));
    let run = need!(ID, run_bench(Rtu::Tmu, &fixture).map_err(|e| e.to_string()));
    if run.simulated_ms < EIGHT_CONVERSIONS_MIN_MS {
        problems.push(format!("8 conversions took {} ms", run.simulated_ms));
    }
    measured.insert("eight_conversions_ms".into(), json!(run.simulated_ms));
    let detail = if problems.is_empty() {
        format!(
            "28 TMU + 10 SDPU channels within 1 LSB; 8 conversions {:.1} ms",
            run.simulated_ms
        )
    } else {
        problems.join("; ")
    };
    Verdict::new(ID, problems.is_empty(), detail, Value::Object(measured))
}

/// A corrupted sentence is dropped and leaves the decoder able to accept
/// the next good epoch.
fn gps_corruption_dropped() -> Result<bool, String> {
    let clock = SimClock::new_virtual();
    let profile = make_stationary_profile(954.0, REFERENCE_LAT, REFERENCE_LON, 10.0)
        .map_err(|e| e.to_string())?;
    let hal = std::sync::Arc::new(Hal::new(clock.clone(), profile, HalConfig::default()));
    let cfg = MissionConfig::default();
    let pool = std::sync::Arc::new(
        DataPool::new(clock, TaskSet::runtime().tasks(), &cfg).map_err(|e| e.to_string())?,
    );
    let mut gps = GpsMeasurer::new(SubsystemEnv::new(hal, pool, std::sync::Arc::new(cfg)));
    let [gga, rmc] = crate::halsim::gps::epoch_sentences(
        1_759_298_400_000,
        REFERENCE_LAT,
        REFERENCE_LON,
        667.0,
        0.0,
    );
    let star = rmc.rfind('*').ok_or("no checksum")?;
    let mut bad = rmc.clone();
    let flipped = if &rmc[star + 1..star + 2] == "0" {
        "1"
    } else {
        "0"
    };
    bad.replace_range(star + 1..star + 2, flipped);
    let (fixes, errors) = gps.decode(format!("{gga}{bad}").as_bytes(), 0);
    let (good, good_errors) = gps.decode(format!("{gga}{rmc}").as_bytes(), 200);
    Ok(fixes.is_empty() && errors == 1 && good.len() == 1 && good_errors == 0)
}

fn gps(run: &RunDir<'_>) -> Verdict {
    const ID: &str = "gps";
    let sc = need!(ID, run.jsonl("tm_sc.jsonl"));
    // the receiver is not read at shutdown
    let nads: Vec<(f64, &Value)> = sc
        .iter()
        .filter(|l| l["payload"]["mode"] != "Shutdown")
        .filter_map(|l| Some((l["t_ms"].as_f64()? / 1000.0, &l["payload"]["nads"]["value"])))
        .filter(|(_, n)| !n.is_null())
        .collect();
    let with_fix: Vec<&(f64, &Value)> = nads.iter().filter(|(_, n)| !n["fix"].is_null()).collect();
    let (Some(first), Some(last)) = (with_fix.first(), with_fix.last()) else {
        return Verdict::not_evaluable(ID, "no GPS fix in tm_sc.jsonl");
    };
    let fixes = |n: &Value| n["gps_fixes"].as_f64().unwrap_or(0.0);
    let span = last.0 - first.0;
    let rate = if span > 0.0 {
        (fixes(last.1) - fixes(first.1)) / span
    } else {
        0.0
    };
    let lat = last.1["fix"]["lat_deg"].as_f64().unwrap_or(f64::NAN);
    let lon = last.1["fix"]["lon_deg"].as_f64().unwrap_or(f64::NAN);
    let parse_errors = last.1["gps_parse_errors"].as_u64().unwrap_or(0);
    let corruption = gps_corruption_dropped();
    let mut problems = Vec::new();
    if !((lat - REFERENCE_LAT).abs() <= GPS_POS_TOL_DEG
        && (lon - REFERENCE_LON).abs() <= GPS_POS_TOL_DEG)
    {
        problems.push(format!("fix ({lat}, {lon}) off the reference"));
    }
    if (rate - GPS_FIX_RATE_HZ).abs() > GPS_FIX_RATE_TOL_HZ {
        problems.push(format!("{rate:.3} fixes/s"));
    }
    if parse_errors != 0 {
        problems.push(format!("{parse_errors} parse errors on a clean stream"));
    }
    match corruption {
        Ok(true) => {}
        Ok(false) => problems.push("corrupted sentence changed state".into()),
        Err(e) => return Verdict::not_evaluable(ID, e),
    }
    let detail = if problems.is_empty() {
        format!("fix ({lat:.6}, {lon:.6}), {rate:.3} fixes/s, bad checksum dropped")
    } else {
        problems.join("; ")
    };
    Verdict::new(
        ID,
        problems.is_empty(),
        detail,
        json!({ "lat": lat, "lon": lon, "fix_rate_hz": rate }),
    )
}

/// Ceiling of `obj`: scan every access of every task.
fn ceiling_by_scan(tasks: &[TaskSpec], obj: &ObjectId) -> Option<u8> {
    let mut best = None;
    for t in tasks {
        for a in &t.accesses {
            if a == obj && best.is_none_or(|b| t.priority > b) {
                best = Some(t.priority);
            }
        }
    }
    best
}

fn queues_ceilings() -> Verdict {
    const ID: &str = "queues_ceilings";
    let q = BoundedQueue::new(ObjectId::EVENT_QUEUE, 3, QUEUE_CAPACITY);
    let sys = Caller::system();
    let results: Vec<PutResult> = (0..=QUEUE_CAPACITY as u64)
        .map(|i| q.put(&sys, Event::new(EventKind::OperatorInjected, i)))
        .collect();
    let eleventh_rejected = results[..QUEUE_CAPACITY]
        .iter()
        .all(|r| *r == PutResult::Accepted)
        && results[QUEUE_CAPACITY] == PutResult::Rejected;
    let set = TaskSet::documented();
    let ceilings = need!(
        ID,
        compute_ceilings(set.tasks(), &ObjectId::ALL).map_err(|e| e.to_string())
    );
    let mut wrong = Vec::new();
    for obj in &ObjectId::ALL {
        let want = ceiling_by_scan(set.tasks(), obj);
        if ceilings.get(obj) != want {
            wrong.push(format!(
                "{}: {:?} vs scan {want:?}",
                obj.as_str(),
                ceilings.get(obj)
            ));
        }
    }
    let pass = eleventh_rejected && wrong.is_empty();
    let detail = if pass {
        format!(
            "11th put rejected; {} ceilings match the scan",
            ObjectId::ALL.len()
        )
    } else {
        format!("11th rejected: {eleventh_rejected}; {}", wrong.join(", "))
    };
    Verdict::new(
        ID,
        pass,
        detail,
        json!({ "overflows": q.overflows(), "objects": ObjectId::ALL.len() }),
    )
}

fn link_fault_tolerance(run: &RunDir<'_>) -> Verdict {
    const ID: &str = "link_fault_tolerance";
    let events = need!(ID, run.jsonl("events.jsonl"));
    let hk = need!(ID, run.jsonl("tm_hk.jsonl"));
    let sc = need!(ID, run.jsonl("tm_sc.jsonl"));
    let transcript = need!(ID, run.jsonl("transcript.jsonl"));
    let info = need!(ID, run.run_json());
    let sc_period_ms = info["config"]["tm"]["sc_period_ms"]
        .as_u64()
        .unwrap_or(1000);

    let kinds: Vec<&str> = events.iter().filter_map(|e| e["kind"].as_str()).collect();
    let lost: Vec<f64> = events
        .iter()
        .filter(|e| e["kind"] == "LinkLost")
        .filter_map(|e| e["t_ms"].as_f64())
        .collect();
    let n_lost = lost.len();
    let n_restored = kinds.iter().filter(|k| **k == "LinkRestored").count();
    let order_ok = kinds.iter().position(|k| *k == "LinkLost")
        < kinds.iter().position(|k| *k == "LinkRestored");

    let authority = |l: &Value| {
        l["payload"]["htl"]["value"]["authority"]
            .as_str()
            .map(str::to_owned)
    };
    let hk_at: Vec<(f64, Option<String>)> = hk
        .iter()
        .map(|l| (l["t_ms"].as_f64().unwrap_or(0.0), authority(l)))
        .collect();
    let (flip_ok, manual_before) = match lost.first() {
        Some(&t) => {
            let before = hk_at
                .iter()
                .filter(|(ht, _)| *ht <= t)
                .any(|(_, a)| a.as_deref() == Some("Manual"));
            let after = hk_at
                .iter()
                .find(|(ht, _)| *ht > t)
                .and_then(|(_, a)| a.clone());
            (before && after.as_deref() == Some("Autonomous"), before)
        }
        None => (false, false),
    };

    let sc_t: Vec<u64> = sc.iter().filter_map(|l| l["t_ms"].as_u64()).collect();
    let onboard_gap = sc_t.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);
    let gapless = !sc_t.is_empty() && onboard_gap <= sc_period_ms * u64::from(tm_divider_max(&hk));

    let note_t = |what: &str| {
        transcript
            .iter()
            .find(|e| e["dir"] == "local" && e["type"] == what)
            .and_then(|e| e["t_ms"].as_f64())
    };
    let down_sc: Vec<f64> = transcript
        .iter()
        .filter(|e| e["dir"] == "down" && e["type"] == "TM_SC")
        .filter_map(|e| e["t_ms"].as_f64())
        .collect();
    let gs_gap = down_sc.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let dropped_for = note_t("drop").zip(note_t("reconnect")).map(|(a, b)| b - a);
    let gap_shown = match dropped_for {
        Some(d) => gs_gap >= d - sc_period_ms as f64,
        None => false,
    };

    let mut problems = Vec::new();
    if n_lost != 1 || n_restored != 1 || !order_ok {
        problems.push(format!("{n_lost} LinkLost / {n_restored} LinkRestored"));
    }
    if !flip_ok {
        problems.push(if manual_before {
            "authority did not become Autonomous".to_owned()
        } else {
            "no Manual authority before the loss".to_owned()
        });
    }
    if !gapless {
        problems.push(format!("onboard SC log gap {onboard_gap} ms"));
    }
    if !gap_shown {
        problems.push(format!(
            "transcript gap {:.0} ms vs drop {dropped_for:?} ms",
            gs_gap
        ));
    }
    let detail = if problems.is_empty() {
        format!(
            "1 LinkLost + 1 LinkRestored, Manual→Autonomous, onboard SC step ≤ {onboard_gap} ms, GS gap {:.1} s",
            gs_gap / 1000.0
        )
    } else {
        problems.join("; ")
    };
    Verdict::new(
        ID,
        problems.is_empty(),
        detail,
        json!({ "link_lost": n_lost, "link_restored": n_restored, "onboard_max_gap_ms": onboard_gap, "gs_max_gap_ms": gs_gap }),
    )
}

/// Largest SC divider seen in HK, so rate overrides do not read as gaps.
fn tm_divider_max(hk: &[Value]) -> u32 {
    hk.iter()
        .filter_map(|l| l["payload"]["tm_mode"]["sc_divider"].as_u64())
        .max()
        .unwrap_or(1)
        .max(1) as u32
}

fn bandwidth(run: &RunDir<'_>) -> Verdict {
    const ID: &str = "bandwidth";
    let bw = need!(ID, run.json("bandwidth.json"));
    let f = |k: &str| bw[k].as_f64().unwrap_or(f64::NAN);
    let (down, up, down_pk, up_pk) = (
        f("downlink_kbps"),
        f("uplink_kbps"),
        f("downlink_peak_kbps"),
        f("uplink_peak_kbps"),
    );
    let pass = down_pk < QUOTA_KBPS && up_pk < QUOTA_KBPS && down > 0.0 && up > 0.0;
    Verdict::new(
        ID,
        pass,
        format!(
            "downlink {down:.3} kbps (peak {down_pk:.3}), uplink {up:.3} kbps (peak {up_pk:.3}); quota {QUOTA_KBPS}; reference {REFERENCE_DOWNLINK_KBPS}/{REFERENCE_UPLINK_KBPS} kbps"
        ),
        bw,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dir_is_not_evaluable_and_fails() {
        let dir = tempfile::tempdir().unwrap();
        let r = acceptance_report(dir.path()).unwrap();
        assert!(!r.passed);
        for id in [
            "mode_sequence",
            "drift_instrument",
            "responsiveness",
            "gps",
            "link_fault_tolerance",
            "bandwidth",
        ] {
            assert_eq!(r.get(id).unwrap().status, Status::NotEvaluable, "{id}");
        }
        assert!(dir.path().join("verdict.json").exists());
        assert!(r.summary().contains("overall: FAIL"));
    }

    #[test]
    fn data_only_criteria() {
        assert!(mse_oracle().passed());
        assert!(acquisition_chain().passed(), "{:?}", acquisition_chain());
        assert!(queues_ceilings().passed());
        assert_eq!(gps_corruption_dropped(), Ok(true));
    }

    #[test]
    fn printed_match_rule() {
        assert!(matches_printed(0.067_307, 0.0673));
        assert!(!matches_printed(7.230_769, 7.2115));
        assert!(matches_printed(5.224_24, 5.2242));
    }

    #[test]
    fn scan_oracle_agrees_on_known_objects() {
        let set = TaskSet::documented();
        assert_eq!(ceiling_by_scan(set.tasks(), &ObjectId::DP_NADS), Some(6));
        assert_eq!(
            ceiling_by_scan(set.tasks(), &ObjectId::EVENT_QUEUE),
            Some(3)
        );
    }

    #[test]
    fn verdict_round_trips_json() {
        let v = Verdict::new("x", true, "ok".into(), json!({ "a": 1 }));
        let back: Verdict = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
    }
}
