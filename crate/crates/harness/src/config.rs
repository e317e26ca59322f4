//! Experiment configs and their JSON files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lowdim_ddpm::linalg::random_orthonormal_rows;
use lowdim_ddpm::noise::ScheduleFamily;
use lowdim_ddpm::rng::Substream;
use lowdim_ddpm::targets::registry::{generate, GeneratorSpec};
use lowdim_ddpm::targets::{PointCloud, SubspaceGaussian, Target};
use lowdim_ddpm::{Error, Result, SamplerVariant};
use serde::{Deserialize, Serialize};

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    Schedule,
    Sample,
    Ksweep,
    Nsweep,
    ScheduleCompare,
    VariantCompare,
    ScoreErrorSweep,
    BoundCheck,
    TraceCurves,
    Covering,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 10] = [
        ExperimentName::Schedule,
        ExperimentName::Sample,
        ExperimentName::Ksweep,
        ExperimentName::Nsweep,
        ExperimentName::ScheduleCompare,
        ExperimentName::VariantCompare,
        ExperimentName::ScoreErrorSweep,
        ExperimentName::BoundCheck,
        ExperimentName::TraceCurves,
        ExperimentName::Covering,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentName::Schedule => "schedule",
            ExperimentName::Sample => "sample",
            ExperimentName::Ksweep => "ksweep",
            ExperimentName::Nsweep => "nsweep",
            ExperimentName::ScheduleCompare => "schedule-compare",
            ExperimentName::VariantCompare => "variant-compare",
            ExperimentName::ScoreErrorSweep => "score-error-sweep",
            ExperimentName::BoundCheck => "bound-check",
            ExperimentName::TraceCurves => "trace-curves",
            ExperimentName::Covering => "covering",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentName::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment {s:?}")))
    }
}

/// Target distribution for the Monte Carlo experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TargetSpec {
    PointMass {
        dim: usize,
    },
    /// `N(0, scale² P)` on a `k`-dimensional subspace. Axis-aligned unless
    /// `basis_seed` is given.
    Subspace {
        dim: usize,
        k: usize,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        basis_seed: Option<u64>,
    },
    /// One of the named generators.
    Cloud(GeneratorSpec),
    /// Points read from a CSV file (optional `weight` column).
    CsvCloud {
        path: PathBuf,
        declared_dim: usize,
        #[serde(default)]
        radius: Option<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl TargetSpec {
    pub fn build(&self) -> Result<Target> {
        match self {
            TargetSpec::PointMass { dim } => Target::point_mass(*dim),
            TargetSpec::Subspace {
                dim,
                k,
                scale,
                basis_seed,
            } => {
                let g = match basis_seed {
                    None => {
                        let base = SubspaceGaussian::axis_aligned(*dim, *k)?;
                        SubspaceGaussian::new(*dim, base.basis_rows().to_vec(), *scale)?
                    }
                    Some(seed) => {
                        let rows = random_orthonormal_rows(&mut Substream::new(*seed, 0).rng(), *dim, *k);
                        SubspaceGaussian::new(*dim, rows, *scale)?
                    }
                };
                Ok(g.into())
            }
            TargetSpec::Cloud(spec) => Ok(generate(spec)?.into()),
            TargetSpec::CsvCloud {
                path,
                declared_dim,
                radius,
            } => {
                let f = std::fs::File::open(path)?;
                Ok(PointCloud::from_csv(f, *declared_dim, *radius)?.into())
            }
        }
    }

    /// Short label used in result rows.
    pub fn label(&self) -> String {
        match self {
            TargetSpec::PointMass { dim } => format!("point-mass-d{dim}"),
            TargetSpec::Subspace { dim, k, .. } => format!("subspace-gaussian-d{dim}-k{k}"),
            TargetSpec::Cloud(g) => format!("{}-d{}", g.name, g.dim),
            TargetSpec::CsvCloud { path, .. } => path.display().to_string(),
        }
    }
}

/// Grid for the bound-check experiment. Every `(dim, k)` pair is combined
/// with every `N`, `T` and `δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundGrid {
    pub dims: Vec<(usize, usize)>,
    pub steps: Vec<usize>,
    pub horizons: Vec<f64>,
    pub early_stops: Vec<f64>,
}

impl Default for BoundGrid {
    fn default() -> Self {
        BoundGrid {
            dims: vec![(4, 1), (16, 2), (64, 4), (128, 8), (128, 128)],
            steps: vec![4, 16, 128, 1024, 4096],
            horizons: vec![1.5, 3.0, 6.0, 10.0],
            early_stops: vec![1e-3, 0.05],
        }
    }
}

impl BoundGrid {
    pub fn len(&self) -> usize {
        self.dims.len() * self.steps.len() * self.horizons.len() * self.early_stops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Everything an experiment reads. Fields not used by the chosen experiment
/// are ignored; all have defaults so a config file only lists overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub spec_version: u32,
    pub experiment: ExperimentName,
    pub seed: u64,
    /// Ambient dimension for the closed-form experiments.
    pub d: usize,
    /// Subspace dimension for the closed-form experiments.
    pub k: usize,
    pub eps_sq: f64,
    /// `T = c_T log(d/ε)` unless `horizon` is set.
    pub c_t: f64,
    pub horizon: Option<f64>,
    pub early_stop: f64,
    pub family: ScheduleFamily,
    pub steps: Vec<usize>,
    pub ks: Vec<usize>,
    /// Also search `N*` against the constant-free bound in ksweep.
    pub bound_search: bool,
    pub variants: Vec<SamplerVariant>,
    pub budgets: Vec<f64>,
    /// Score error budget for the sample experiment.
    pub score_budget: f64,
    pub samples: usize,
    /// Permutations for the energy check of the sample experiment; 0 skips it.
    pub permutations: usize,
    pub target: TargetSpec,
    pub targets: Vec<TargetSpec>,
    /// Forward times for trace-curves.
    pub grid: Vec<f64>,
    /// Declared `k` for the posterior-variance ratio in trace-curves.
    pub k_declared: Option<usize>,
    pub scales: Vec<f64>,
    pub bound_grid: BoundGrid,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            spec_version: SPEC_VERSION,
            experiment: ExperimentName::Nsweep,
            seed: 0,
            d: 64,
            k: 2,
            eps_sq: 0.01,
            c_t: 2.0,
            horizon: None,
            early_stop: 0.01,
            family: ScheduleFamily::TwoPhase,
            steps: vec![32],
            ks: vec![2, 4, 8, 16],
            bound_search: true,
            variants: SamplerVariant::ALL.to_vec(),
            budgets: vec![1e-4, 1e-3, 1e-2],
            score_budget: 0.0,
            samples: 10_000,
            permutations: 0,
            target: TargetSpec::Cloud(GeneratorSpec::default()),
            targets: builtin_targets(16),
            grid: log_grid(0.05, 5.0, 20),
            k_declared: None,
            scales: vec![0.2, 0.1, 0.05],
            bound_grid: BoundGrid::default(),
        }
    }
}

/// The four named clouds plus the closed-form targets, all in dimension `d`.
pub fn builtin_targets(d: usize) -> Vec<TargetSpec> {
    let mut out: Vec<TargetSpec> = lowdim_ddpm::targets::registry::NAMES
        .iter()
        .map(|n| TargetSpec::Cloud(GeneratorSpec::new(n, d)))
        .collect();
    out.push(TargetSpec::Subspace {
        dim: d,
        k: 2,
        scale: 1.0,
        basis_seed: None,
    });
    out.push(TargetSpec::PointMass { dim: d });
    out
}

/// `n` points spaced geometrically on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (r * i as f64).exp()).collect()
}

impl ExperimentSpec {
    pub fn new(experiment: ExperimentName) -> Self {
        ExperimentSpec {
            experiment,
            ..ExperimentSpec::default()
        }
    }

    /// Reads a config file. The experiment named by the caller wins over
    /// one in the file.
    pub fn from_file(path: &Path, experiment: ExperimentName) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, experiment)
    }

    pub fn from_json(text: &str, experiment: ExperimentName) -> Result<Self> {
        let mut spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.experiment = experiment;
        spec.validate()?;
        Ok(spec)
    }

    /// `T`, defaulting to `c_T log(d/ε)`.
    pub fn horizon(&self) -> f64 {
        self.horizon
            .unwrap_or_else(|| self.c_t * (self.d as f64 / self.eps_sq.sqrt()).ln())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.spec_version != SPEC_VERSION {
            return bad(format!(
                "spec_version {} is not supported (expected {SPEC_VERSION})",
                self.spec_version
            ));
        }
        if self.d == 0 || self.k > self.d {
            return bad(format!("need 0 <= k <= d, got k = {}, d = {}", self.k, self.d));
        }
        if !(self.eps_sq > 0.0) {
            return bad(format!("eps_sq must be positive, got {}", self.eps_sq));
        }
        if !(self.c_t > 0.0) {
            return bad(format!("c_t must be positive, got {}", self.c_t));
        }
        if !(self.horizon() > self.early_stop) {
            return bad(format!(
                "horizon {} must exceed early_stop {}",
                self.horizon(),
                self.early_stop
            ));
        }
        let needs_steps = !matches!(
            self.experiment,
            ExperimentName::Ksweep | ExperimentName::BoundCheck | ExperimentName::TraceCurves | ExperimentName::Covering
        );
        if needs_steps && self.steps.is_empty() {
            return bad("steps must not be empty".into());
        }
        if self.experiment == ExperimentName::Ksweep && self.ks.iter().any(|&k| k > self.d) {
            return bad(format!("every k in ks must be <= d = {}", self.d));
        }
        if self.variants.is_empty() {
            return bad("variants must not be empty".into());
        }
        if self.samples == 0 {
            return bad("samples must be positive".into());
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) || self.grid.iter().any(|u| !(*u > 0.0)) {
            return bad("grid must be positive and strictly increasing".into());
        }
        if self.scales.iter().any(|s| !(*s > 0.0)) {
            return bad("cover scales must be positive".into());
        }
        Ok(())
    }
}
