use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lowdim_ddpm::Workers;
use lowdim_ddpm_lab::{run, ExperimentName, ExperimentSpec};

#[derive(Parser)]
#[command(name = "ddpm-lab", version, about = "Run DDPM sampler experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config overriding the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory (default: out/<experiment>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Tabulate a schedule and its step coefficients.
    Schedule,
    /// Draw samples with the DDPM sampler.
    Sample,
    /// Minimal N for a target KL as a function of k.
    Ksweep,
    /// Exact KL as a function of N.
    Nsweep,
    /// Two-phase against uniform schedules.
    ScheduleCompare,
    /// DDPM against alternative parameterizations.
    VariantCompare,
    /// KL inflation under injected score error.
    ScoreErrorSweep,
    /// Check the KL bound chain on a grid.
    BoundCheck,
    /// Posterior covariance trace curves.
    TraceCurves,
    /// Greedy covering numbers of a point cloud.
    Covering,
}

impl Command {
    fn experiment(self) -> ExperimentName {
        match self {
            Command::Schedule => ExperimentName::Schedule,
            Command::Sample => ExperimentName::Sample,
            Command::Ksweep => ExperimentName::Ksweep,
            Command::Nsweep => ExperimentName::Nsweep,
            Command::ScheduleCompare => ExperimentName::ScheduleCompare,
            Command::VariantCompare => ExperimentName::VariantCompare,
            Command::ScoreErrorSweep => ExperimentName::ScoreErrorSweep,
            Command::BoundCheck => ExperimentName::BoundCheck,
            Command::TraceCurves => ExperimentName::TraceCurves,
            Command::Covering => ExperimentName::Covering,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let experiment = cli.command.experiment();
    let mut spec = match &cli.config {
        Some(path) => match ExperimentSpec::from_file(path, experiment) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(2);
            }
        },
        None => ExperimentSpec::new(experiment),
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    let workers = cli.workers.map_or_else(Workers::available, Workers::new);
    let out = cli.out.unwrap_or_else(|| PathBuf::from("out").join(experiment.name()));
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: {}: {e}", out.display());
        return ExitCode::from(2);
    }

    let (record, failure) = match run(&spec, workers, Some(&out)) {
        Ok(r) => (r, None),
        Err(e) => {
            let msg = e.to_string();
            (*e.record, Some(msg))
        }
    };
    if let Err(e) = record.write(&out) {
        eprintln!("error writing {}: {e}", out.display());
        return ExitCode::from(2);
    }
    for v in &record.verdicts {
        println!("[{}] {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    if record.theorem_hypothesis_violated {
        println!("note: some schedules violate the theorem hypotheses (see record.json)");
    }
    println!(
        "{} rows in {:.2}s -> {}",
        record.rows.len(),
        record.wall_clock_secs,
        out.display()
    );
    if let Some(msg) = failure {
        eprintln!("error: {msg}");
        return ExitCode::FAILURE;
    }
    if record.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}
