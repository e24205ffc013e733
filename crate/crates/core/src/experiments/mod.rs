//! Configuration-driven sweeps with CSV/JSON artifacts.
//!
//! Each sweep entry runs as an independent single-threaded job. Results are
//! gathered in input order and written by one collector, so the output is
//! identical for any `jobs`.

mod commands;
mod config;
mod fit;
mod runs;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::error::{Error, Result};

pub use commands::{
    linearize_ergodic_command, master_eval_command, random_probes, solve_discounted_command, solve_ergodic_command,
    solve_finite_command, CommandOutcome,
};
pub use config::{
    parse_config, parse_config_str, CorrectorConfig, ExperimentConfig, FitConfig, GridConfig, InitialDensity, ModelChoice,
    NamedDensity, TimeConfig, WindowRule,
};
pub use fit::{fixed_window, floor_aware_window, linear_regression, order_fit, plateau_level, rate_fit, RateFit, FLOOR_RELATIVE, MIN_FIT_POINTS};
pub use runs::{run_discount, run_expansion, run_experiment, run_longtime, run_turnpike, series_fit, FitOutcome, BELOW_FLOOR};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Turnpike,
    Longtime,
    Discount,
    Expansion,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "turnpike" => Ok(Self::Turnpike),
            "longtime" => Ok(Self::Longtime),
            "discount" => Ok(Self::Discount),
            "expansion" => Ok(Self::Expansion),
            other => Err(Error::InvalidArgument(format!("unknown experiment {other:?}"))),
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Turnpike => "turnpike",
            Self::Longtime => "longtime",
            Self::Discount => "discount",
            Self::Expansion => "expansion",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Missing,
}

impl Cell {
    pub fn opt(v: Option<f64>) -> Cell {
        v.map_or(Cell::Missing, Cell::Num)
    }

    /// Floats with 17 significant digits.
    pub fn render(&self) -> String {
        match self {
            Cell::Num(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Num(v) => format!("{v}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Int(i) => Some(*i as f64),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| &r[j]).collect())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Not applicable to this configuration.
    Skip,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: if passed { CheckStatus::Pass } else { CheckStatus::Fail },
            detail: detail.into(),
        }
    }

    pub fn skip(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: CheckStatus::Skip,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    /// One table per sweep entry.
    pub entries: Vec<Table>,
    pub summary: Table,
    pub checks: Vec<Check>,
    /// Scalars that do not fit the summary table.
    pub extra: serde_json::Value,
}

impl ExperimentReport {
    pub fn contract_holds(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }
}

#[derive(Serialize)]
struct RunRecord<'a> {
    experiment: ExperimentKind,
    config: &'a ExperimentConfig,
    environment: Environment,
    checks: &'a [Check],
    extra: &'a serde_json::Value,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Environment {
    package: &'static str,
    version: &'static str,
    os: &'static str,
    arch: &'static str,
}

/// Writes one CSV per entry, `summary.csv` and `run.json` into `dir`.
pub fn write_report(report: &ExperimentReport, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for t in report.entries.iter().chain(std::iter::once(&report.summary)) {
        let p = dir.join(format!("{}.csv", t.name));
        std::fs::write(&p, t.to_csv()?)?;
        files.push(p);
    }
    let record = RunRecord {
        experiment: report.experiment,
        config: cfg,
        environment: Environment {
            package: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
        },
        checks: &report.checks,
        extra: &report.extra,
        files: files.iter().filter_map(|p| p.file_name()).map(|s| s.to_string_lossy().into_owned()).collect(),
    };
    let p = dir.join("run.json");
    std::fs::write(&p, serde_json::to_string_pretty(&record)?)?;
    files.push(p);
    Ok(files)
}

/// Maps `f` over `items` on up to `jobs` threads, keeping input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                out.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    out.into_inner().expect("result lock").into_iter().map(|r| r.expect("every item mapped")).collect()
}

/// Short label for a parameter in file names: `10`, `2.5`, `0.025`.
pub(crate) fn label(v: f64) -> String {
    format!("{v}")
}
