//! Long-format CSV projections of records for plotting.

use std::fs;
use std::path::{Path, PathBuf};

use lowdim_ddpm::{Error, Result};

use crate::config::ExperimentName;
use crate::record::{Cell, ExperimentRecord};

enum Series {
    Named(&'static str),
    Column(&'static str),
}

/// One `(x, y, series, stderr)` projection of the result columns.
struct Projection {
    x: &'static str,
    y: &'static str,
    series: Series,
    stderr: Option<&'static str>,
}

const fn proj(x: &'static str, y: &'static str, series: Series, stderr: Option<&'static str>) -> Projection {
    Projection { x, y, series, stderr }
}

fn projections(e: ExperimentName) -> Vec<Projection> {
    use Series::*;
    match e {
        ExperimentName::Schedule => vec![proj("t_n", "interval", Column("N"), None)],
        ExperimentName::Sample => vec![proj("coord", "variance", Named("variance"), None)],
        ExperimentName::Nsweep => vec![
            proj("N", "exact_kl", Named("exact_kl"), None),
            proj("N", "discretization_integral", Named("discretization_integral"), None),
            proj("N", "init_kl", Named("init_kl"), None),
        ],
        ExperimentName::VariantCompare => vec![proj("N", "exact_kl", Column("variant"), None)],
        ExperimentName::ScoreErrorSweep => vec![proj("budget", "inflation", Column("N"), None)],
        ExperimentName::BoundCheck => vec![
            proj("N", "exact_kl", Named("exact_kl"), None),
            proj("N", "discretization_integral", Named("discretization_integral"), None),
        ],
        ExperimentName::Covering => vec![proj("eps", "count", Column("target"), None)],
        // these have their own column sets
        ExperimentName::Ksweep | ExperimentName::TraceCurves | ExperimentName::ScheduleCompare => Vec::new(),
    }
}

fn col(rec: &ExperimentRecord, name: &str) -> Result<usize> {
    rec.column_index(name)
        .ok_or_else(|| Error::Config(format!("record for {} has no column {name:?}", rec.experiment)))
}

/// Header and rows of the plot table for `rec`.
pub fn plot_table(rec: &ExperimentRecord) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let pick = |names: &[&str]| -> Result<(Vec<String>, Vec<Vec<String>>)> {
        let idx: Vec<usize> = names.iter().map(|n| col(rec, n)).collect::<Result<_>>()?;
        let rows = rec
            .rows
            .iter()
            .map(|r| idx.iter().map(|&i| r[i].to_string()).collect())
            .collect();
        Ok((names.iter().map(|s| s.to_string()).collect(), rows))
    };
    match rec.experiment {
        ExperimentName::Ksweep => return pick(&["k", "N_star"]),
        ExperimentName::TraceCurves => return pick(&["u", "estimate", "stderr", "target"]),
        ExperimentName::ScheduleCompare => return pick(&["N", "schedule_family", "exact_kl"]),
        _ => {}
    }
    let header = ["x", "y", "series", "stderr"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for p in projections(rec.experiment) {
        let (x, y) = (col(rec, p.x)?, col(rec, p.y)?);
        let series = match p.series {
            Series::Column(c) => Some(col(rec, c)?),
            Series::Named(_) => None,
        };
        let se = p.stderr.map(|c| col(rec, c)).transpose()?;
        for r in &rec.rows {
            rows.push(vec![
                r[x].to_string(),
                r[y].to_string(),
                match (series, &p.series) {
                    (Some(i), _) => r[i].to_string(),
                    (None, Series::Named(n)) => n.to_string(),
                    (None, Series::Column(_)) => unreachable!(),
                },
                se.map_or(Cell::Missing, |i| r[i].clone()).to_string(),
            ]);
        }
    }
    Ok((header, rows))
}

/// Writes `plot.csv` into `dir`.
pub fn emit_plot_csv(rec: &ExperimentRecord, dir: &Path) -> Result<PathBuf> {
    let (header, rows) = plot_table(rec)?;
    fs::create_dir_all(dir)?;
    let path = dir.join("plot.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(path)
}
