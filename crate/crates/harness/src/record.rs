//! Experiment records: result rows, embedded schedules, verdicts.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use lowdim_ddpm::batch::json_hash;
use lowdim_ddpm::noise::{HypothesisViolation, Schedule};
use lowdim_ddpm::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentName, ExperimentSpec};

/// Build identifier baked in at compile time.
pub const BUILD_ID: &str = concat!(
    env!("CARGO_PKG_NAME"),
    " ",
    env!("CARGO_PKG_VERSION"),
    " ",
    env!("LOWDIM_BUILD_REV")
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Flag(bool),
    Text(String),
    Missing,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Num(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            // shortest string that parses back to the same value
            Cell::Num(x) => write!(f, "{x:?}"),
            Cell::Flag(b) => write!(f, "{b}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Missing => Ok(()),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        if v.is_finite() {
            Cell::Num(v)
        } else {
            Cell::Missing
        }
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::from)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Flag(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A schedule used by the experiment, with its hypothesis check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub label: String,
    pub schedule: Schedule,
    pub kappa: f64,
    pub step_kappa: f64,
    pub violations: Vec<HypothesisViolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: ExperimentName,
    pub spec: ExperimentSpec,
    pub spec_hash: String,
    pub build: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub schedules: Vec<ScheduleEntry>,
    #[serde(rename = "theorem-hypothesis-violated")]
    pub theorem_hypothesis_violated: bool,
    pub summary: BTreeMap<String, f64>,
    pub verdicts: Vec<Verdict>,
    /// Extra files written next to the record.
    pub artifacts: Vec<String>,
    pub wall_clock_secs: f64,
    /// Set when the run stopped early; rows hold what finished.
    pub error: Option<String>,
}

impl ExperimentRecord {
    pub fn new(spec: &ExperimentSpec) -> Result<Self> {
        Ok(ExperimentRecord {
            experiment: spec.experiment,
            spec: spec.clone(),
            spec_hash: json_hash(spec)?,
            build: BUILD_ID.to_string(),
            columns: Vec::new(),
            rows: Vec::new(),
            schedules: Vec::new(),
            theorem_hypothesis_violated: false,
            summary: BTreeMap::new(),
            verdicts: Vec::new(),
            artifacts: Vec::new(),
            wall_clock_secs: 0.0,
            error: None,
        })
    }

    pub fn set_columns(&mut self, cols: &[&str]) {
        self.columns = cols.iter().map(|c| c.to_string()).collect();
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Shape {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    /// Embeds `schedule` unless an identical one is already recorded.
    pub fn add_schedule(&mut self, label: impl Into<String>, schedule: &Schedule) -> bool {
        let violations = schedule.hypothesis_violations();
        let flagged = !violations.is_empty();
        self.theorem_hypothesis_violated |= flagged;
        if self.schedules.iter().all(|e| &e.schedule != schedule) {
            self.schedules.push(ScheduleEntry {
                label: label.into(),
                schedule: schedule.clone(),
                kappa: schedule.kappa(),
                step_kappa: schedule.step_kappa(),
                violations,
            });
        }
        flagged
    }

    pub fn verdict(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.error.is_none() && self.verdicts.iter().all(|v| v.pass)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for row in &self.rows {
            out.write_record(row.iter().map(|c| c.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `results.csv`, `record.json` and `plot.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let results = dir.join("results.csv");
        self.write_csv(fs::File::create(&results)?)?;
        let record = dir.join("record.json");
        serde_json::to_writer_pretty(fs::File::create(&record)?, self)?;
        let plot = crate::plot::emit_plot_csv(self, dir)?;
        Ok(vec![results, record, plot])
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(fs::File::open(path)?)?)
    }
}
