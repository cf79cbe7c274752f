//! Result records and file persistence.
//!
//! Every experiment writes the same trio:
//!
//! * `record.json` — the self-describing result: config echo, per-point
//!   estimates, fitted slopes, and the verdict table. Byte-identical across
//!   reruns of the same config.
//! * `points.csv` — raw estimate rows (kind, params, n, reps, estimate,
//!   ci_low, ci_high, seed). The verdict stage is a pure function of these
//!   rows plus the config.
//! * `runs.csv` — per-generation statistics rows for tree experiments
//!   (n, M_n, W_n, W_n_beta, D_n, population, truncated_count, replica,
//!   seed); absent for walk-only presets.
//!
//! Wall-clock timing goes to a separate `timings.json`, which is explicitly
//! outside the byte-identity contract.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward_sim::{ForwardRun, GenStats, GEN_STATS_HEADER};
use crate::stats::EstimateRecord;

use super::config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Header of `points.csv`, fixed and golden-tested.
pub const POINTS_HEADER: [&str; 8] = [
    "kind", "params", "n", "reps", "estimate", "ci_low", "ci_high", "seed",
];

/// A fitted slope with its target band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRecord {
    pub label: String,
    pub slope: f64,
    pub stderr: f64,
    pub target: Option<f64>,
    pub tolerance: Option<f64>,
}

/// One verdict line; `pass: None` marks an informational (qualitative) row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictLine {
    pub name: String,
    pub pass: Option<bool>,
    pub detail: String,
}

impl VerdictLine {
    pub fn pass(name: impl Into<String>, detail: impl Into<String>) -> Self {
        VerdictLine {
            name: name.into(),
            pass: Some(true),
            detail: detail.into(),
        }
    }

    pub fn fail(name: impl Into<String>, detail: impl Into<String>) -> Self {
        VerdictLine {
            name: name.into(),
            pass: Some(false),
            detail: detail.into(),
        }
    }

    pub fn check(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        VerdictLine {
            name: name.into(),
            pass: Some(ok),
            detail: detail.into(),
        }
    }

    pub fn info(name: impl Into<String>, detail: impl Into<String>) -> Self {
        VerdictLine {
            name: name.into(),
            pass: None,
            detail: detail.into(),
        }
    }
}

/// The persisted experiment result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub software_version: String,
    pub preset: String,
    pub config: ExperimentConfig,
    pub points: Vec<EstimateRecord>,
    pub slopes: Vec<SlopeRecord>,
    pub verdicts: Vec<VerdictLine>,
    /// Qualitative presets never emit pass/fail verdicts; this flag marks
    /// them so downstream tooling cannot mistake reports for checks.
    pub qualitative: bool,
    pub notes: Vec<String>,
}

impl ResultRecord {
    pub fn new(config: &ExperimentConfig) -> Self {
        ResultRecord {
            schema_version: SCHEMA_VERSION,
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            preset: config.preset.clone(),
            config: config.clone(),
            points: Vec::new(),
            slopes: Vec::new(),
            verdicts: Vec::new(),
            qualitative: false,
            notes: Vec::new(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass != Some(false))
    }

    /// One-screen verdict table.
    pub fn verdict_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("preset {}\n", self.preset));
        for v in &self.verdicts {
            let mark = match v.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "INFO",
            };
            out.push_str(&format!("  [{mark}] {}: {}\n", v.name, v.detail));
        }
        out
    }
}

/// Everything an experiment leaves on disk.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: ResultRecord,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Raw per-run statistics kept in memory before persistence.
#[derive(Debug, Clone, Default)]
pub struct RawRuns {
    pub rows: Vec<(GenStats, u64, u64)>, // (stats, replica, seed)
}

impl RawRuns {
    pub fn push_run(&mut self, run: &ForwardRun, keep: impl Fn(u32) -> bool) {
        for s in &run.stats {
            if keep(s.n) {
                self.rows.push((*s, run.replica, run.seed));
            }
        }
    }
}

/// Parsed view of one `runs.csv` row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunsRow {
    pub n: u32,
    pub min_position: f64,
    pub additive_martingale: f64,
    pub restricted_martingale: f64,
    pub derivative_martingale: f64,
    pub population: u64,
    pub truncated_count: f64,
    pub replica: u64,
    pub seed: u64,
}

pub fn write_points_csv(path: &Path, points: &[EstimateRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(POINTS_HEADER)?;
    for p in points {
        w.write_record([
            p.kind.clone(),
            p.params.clone(),
            p.n.to_string(),
            p.reps.to_string(),
            format!("{}", p.estimate),
            format!("{}", p.ci_low),
            format!("{}", p.ci_high),
            p.seed.to_string(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Serde(e.to_string()))?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_points_csv(path: &Path) -> Result<Vec<EstimateRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        if row.len() != POINTS_HEADER.len() {
            return Err(Error::Serde(format!(
                "points row has {} fields, expected {}",
                row.len(),
                POINTS_HEADER.len()
            )));
        }
        let field = |i: usize| -> &str { row.get(i).unwrap_or("") };
        let parse_f = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|e| Error::Serde(format!("bad float '{}': {e}", field(i))))
        };
        let parse_u = |i: usize| -> Result<u64> {
            field(i)
                .parse::<u64>()
                .map_err(|e| Error::Serde(format!("bad integer '{}': {e}", field(i))))
        };
        out.push(EstimateRecord {
            kind: field(0).to_string(),
            params: field(1).to_string(),
            n: parse_u(2)?,
            reps: parse_u(3)?,
            estimate: parse_f(4)?,
            ci_low: parse_f(5)?,
            ci_high: parse_f(6)?,
            seed: parse_u(7)?,
        });
    }
    Ok(out)
}

pub fn write_runs_csv(path: &Path, raw: &RawRuns) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(GEN_STATS_HEADER)?;
    for (s, replica, seed) in &raw.rows {
        w.write_record([
            s.n.to_string(),
            format!("{}", s.min_position),
            format!("{}", s.additive_martingale),
            format!("{}", s.restricted_martingale),
            format!("{}", s.derivative_martingale),
            s.population.to_string(),
            format!("{}", s.truncated_count),
            replica.to_string(),
            seed.to_string(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Serde(e.to_string()))?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunsRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let field = |i: usize| -> &str { row.get(i).unwrap_or("") };
        let parse_f = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|e| Error::Serde(format!("bad float '{}': {e}", field(i))))
        };
        let parse_u = |i: usize| -> Result<u64> {
            field(i)
                .parse::<u64>()
                .map_err(|e| Error::Serde(format!("bad integer '{}': {e}", field(i))))
        };
        out.push(RunsRow {
            n: parse_u(0)? as u32,
            min_position: parse_f(1)?,
            additive_martingale: parse_f(2)?,
            restricted_martingale: parse_f(3)?,
            derivative_martingale: parse_f(4)?,
            population: parse_u(5)?,
            truncated_count: parse_f(6)?,
            replica: parse_u(7)?,
            seed: parse_u(8)?,
        });
    }
    Ok(out)
}

/// Write the record trio (and optional runs file) into `dir`.
pub fn persist(
    dir: &Path,
    record: &ResultRecord,
    raw_runs: Option<&RawRuns>,
    wall_clock_ms: u128,
) -> Result<RunOutput> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();

    let record_path = dir.join("record.json");
    fs::write(&record_path, serde_json::to_string_pretty(record)?)?;
    files.push(record_path);

    let points_path = dir.join("points.csv");
    write_points_csv(&points_path, &record.points)?;
    files.push(points_path);

    if let Some(raw) = raw_runs {
        let runs_path = dir.join("runs.csv");
        write_runs_csv(&runs_path, raw)?;
        files.push(runs_path);
    }

    // timing is useful but non-reproducible; keep it out of the
    // byte-identity contract in its own file
    let timing_path = dir.join("timings.json");
    fs::write(
        &timing_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "wall_clock_ms": wall_clock_ms as u64,
        }))?,
    )?;

    Ok(RunOutput {
        record: record.clone(),
        dir: dir.to_path_buf(),
        files,
    })
}

pub fn load_record(dir: &Path) -> Result<ResultRecord> {
    let text = fs::read_to_string(dir.join("record.json"))?;
    Ok(serde_json::from_str(&text)?)
}
