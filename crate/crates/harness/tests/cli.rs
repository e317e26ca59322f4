use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lowdim_ddpm_lab::config::SPEC_VERSION;
use lowdim_ddpm_lab::record::Cell;
use lowdim_ddpm_lab::{ExperimentName, ExperimentRecord, ExperimentSpec};

fn lab(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ddpm-lab"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("config.json");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.env("RUST_LOG", "warn").output().unwrap()
}

fn out(dir: &Path) -> PathBuf {
    dir.join("out")
}

fn csv_rows(path: &Path) -> (String, Vec<String>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().map(String::from);
    let header = lines.next().unwrap();
    (header, lines.collect())
}

#[test]
fn schedule_writes_one_row_per_step() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lab(tmp.path(), &["schedule"], Some(r#"{"steps": [8]}"#));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&out(tmp.path()).join("results.csv"));
    assert!(header.starts_with("N,n,t_n,t_next,interval"));
    assert_eq!(rows.len(), 8);
    let rec = ExperimentRecord::read(&out(tmp.path()).join("record.json")).unwrap();
    assert_eq!(rec.experiment, ExperimentName::Schedule);
    assert_eq!(rec.schedules.len(), 1);
    assert_eq!(rec.schedules[0].schedule.steps(), 8);
}

#[test]
fn nsweep_single_n_has_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lab(tmp.path(), &["nsweep"], Some(r#"{"steps": [64]}"#));
    assert!(o.status.code() == Some(0) || o.status.code() == Some(3));
    let (_, rows) = csv_rows(&out(tmp.path()).join("results.csv"));
    assert_eq!(rows.len(), 1);
}

#[test]
fn bad_config_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lab(tmp.path(), &["nsweep"], Some(r#"{"stepz": [64]}"#));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stepz"));
    let o = lab(tmp.path(), &["nsweep"], Some(r#"{"steps": [64], "spec_version": 99}"#));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_schedule_keeps_record_and_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    // two-phase needs an even step count
    let o = lab(tmp.path(), &["nsweep"], Some(r#"{"steps": [16, 7]}"#));
    assert_eq!(o.status.code(), Some(1));
    let rec = ExperimentRecord::read(&out(tmp.path()).join("record.json")).unwrap();
    assert!(rec.error.is_some());
    assert_eq!(rec.rows.len(), 1);
    assert!(!rec.spec_hash.is_empty());
}

#[test]
fn plot_columns() {
    let cases = [
        ("ksweep", r#"{"bound_search": false}"#, "k,N_star"),
        (
            "trace-curves",
            r#"{"samples": 200, "grid": [0.1, 1.0], "targets": [{"kind": "point-mass", "dim": 4}]}"#,
            "u,estimate,stderr,target",
        ),
        ("schedule-compare", r#"{"steps": [16, 32]}"#, "N,schedule_family,exact_kl"),
        ("nsweep", r#"{"steps": [16, 32]}"#, "x,y,series,stderr"),
    ];
    for (name, config, want) in cases {
        let tmp = tempfile::tempdir().unwrap();
        let o = lab(tmp.path(), &[name], Some(config));
        assert_ne!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let (header, rows) = csv_rows(&out(tmp.path()).join("plot.csv"));
        assert_eq!(header, want, "{name}");
        assert!(!rows.is_empty(), "{name}");
    }
}

#[test]
fn sample_is_identical_across_workers() {
    let config = r#"{"samples": 500, "target": {"kind": "subspace", "dim": 6, "k": 2, "basis_seed": 3}}"#;
    let mut seen = Vec::new();
    for w in ["1", "3"] {
        let tmp = tempfile::tempdir().unwrap();
        let o = lab(tmp.path(), &["sample", "--workers", w, "--seed", "11"], Some(config));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let files: Vec<Vec<u8>> = ["results.csv", "plot.csv", "samples.csv"]
            .iter()
            .map(|f| fs::read(out(tmp.path()).join(f)).unwrap())
            .collect();
        seen.push(files);
    }
    assert_eq!(seen[0], seen[1]);
}

#[test]
fn seed_flag_changes_samples() {
    let config = r#"{"samples": 50, "target": {"kind": "point-mass", "dim": 2}}"#;
    let read = |seed: &str| {
        let tmp = tempfile::tempdir().unwrap();
        lab(tmp.path(), &["sample", "--seed", seed], Some(config));
        fs::read(out(tmp.path()).join("samples.csv")).unwrap()
    };
    assert_ne!(read("1"), read("2"));
}

#[test]
fn config_file_does_not_pick_the_experiment() {
    let spec = ExperimentSpec::from_json(r#"{"experiment": "covering", "seed": 4}"#, ExperimentName::Nsweep).unwrap();
    assert_eq!(spec.experiment, ExperimentName::Nsweep);
    assert_eq!(spec.seed, 4);
    assert_eq!(spec.spec_version, SPEC_VERSION);
}

#[test]
fn experiment_names_round_trip() {
    for e in ExperimentName::ALL {
        assert_eq!(e.name().parse::<ExperimentName>().unwrap(), e);
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, format!("\"{}\"", e.name()));
    }
    assert!("k-sweep".parse::<ExperimentName>().is_err());
}

#[test]
fn default_horizon_follows_dimension_and_accuracy() {
    let spec = ExperimentSpec::new(ExperimentName::Nsweep);
    let want = 2.0 * (64.0f64 / 0.1).ln();
    assert!((spec.horizon() - want).abs() < 1e-12);
}

#[test]
fn cells_render_losslessly() {
    let x = 0.1 + 0.2;
    let s = Cell::from(x).to_string();
    assert_eq!(s.parse::<f64>().unwrap(), x);
    assert_eq!(Cell::from(f64::NAN), Cell::Missing);
    assert_eq!(Cell::Missing.to_string(), "");
    assert_eq!(Cell::from(7usize).to_string(), "7");
    assert_eq!(Cell::from(Some(1.5)).as_f64(), Some(1.5));
}

#[test]
fn record_rejects_ragged_rows() {
    let spec = ExperimentSpec::new(ExperimentName::Nsweep);
    let mut rec = ExperimentRecord::new(&spec).unwrap();
    rec.set_columns(&["a", "b"]);
    assert!(rec.push_row(vec![Cell::from(1usize)]).is_err());
    rec.push_row(vec![Cell::from(1usize), Cell::from("x")]).unwrap();
    assert_eq!(rec.column("b").unwrap(), vec![&Cell::from("x")]);
}
