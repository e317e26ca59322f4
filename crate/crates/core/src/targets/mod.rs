//! Target laws with closed-form posterior quantities under Gaussian corruption
//! `X_t = e^{-t} X_0 + σ_t W`.

mod cloud;
mod oracle;
pub mod registry;
mod subspace;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cloud::PointCloud;
pub use oracle::{DirectionField, Perturbation, ScoreOracle};
pub use subspace::SubspaceGaussian;

use crate::batch::{Provenance, SampleBatch, TimeLabel};
use crate::error::{domain, Error, Result};
use crate::exec::{map_indexed, Workers};
use crate::noise::sigma_sq_raw;
use crate::rng::{fill_standard_normal, Substream};

pub(crate) fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(domain(format!("posterior quantities need t > 0, got {t}")));
    }
    Ok(())
}

pub(crate) fn check_query(dim: usize, x: &[f64]) -> Result<()> {
    if x.len() != dim {
        return Err(Error::Shape {
            expected: dim,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("query point".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Cloud(PointCloud),
    Subspace(SubspaceGaussian),
}

/// Serializable description of a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub kind: String,
    pub dim: usize,
    pub intrinsic_dim: usize,
    pub points: Option<usize>,
    pub span_rank: usize,
    pub radius: Option<f64>,
    pub second_moment: f64,
    pub fingerprint: String,
}

impl From<PointCloud> for Target {
    fn from(c: PointCloud) -> Self {
        Target::Cloud(c)
    }
}

impl From<SubspaceGaussian> for Target {
    fn from(g: SubspaceGaussian) -> Self {
        Target::Subspace(g)
    }
}

impl Target {
    /// Dirac mass at the origin of `R^d`.
    pub fn point_mass(dim: usize) -> Result<Self> {
        Ok(Target::Cloud(PointCloud::new(dim, vec![0.0; dim], None, 0, None)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Target::Cloud(c) => c.dim(),
            Target::Subspace(g) => g.dim(),
        }
    }

    /// `k` for a subspace Gaussian, the declared value for a point cloud.
    pub fn intrinsic_dim(&self) -> usize {
        match self {
            Target::Cloud(c) => c.declared_dim(),
            Target::Subspace(g) => g.k(),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            Target::Cloud(c) => c.second_moment(),
            Target::Subspace(g) => g.second_moment(),
        }
    }

    pub fn radius(&self) -> Option<f64> {
        match self {
            Target::Cloud(c) => Some(c.radius()),
            Target::Subspace(_) => None,
        }
    }

    pub fn sample_clean<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Target::Cloud(c) => c.sample_clean(rng, out),
            Target::Subspace(g) => g.sample_clean(rng, out),
        }
    }

    /// Draws `X_0` and then `W` from `rng`.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut x0 = vec![0.0; self.dim()];
        self.sample_clean(rng, &mut x0);
        let mut w = vec![0.0; self.dim()];
        fill_standard_normal(rng, &mut w);
        (x0, w)
    }

    pub fn posterior_mean_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Target::Cloud(c) => c.posterior_mean_into(t, x, out),
            Target::Subspace(g) => g.posterior_mean_into(t, x, out),
        }
    }

    /// `E[X_0 | X_t = x]`.
    pub fn posterior_mean(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.posterior_mean_into(t, x, &mut out)?;
        Ok(out)
    }

    /// `Tr Cov[X_0 | X_t = x]`.
    pub fn posterior_cov_trace(&self, t: f64, x: &[f64]) -> Result<f64> {
        match self {
            Target::Cloud(c) => c.posterior_cov_trace(t, x),
            Target::Subspace(g) => {
                check_query(g.dim(), x)?;
                g.posterior_cov_trace(t)
            }
        }
    }

    /// `(Tr Σ_t(x), ‖Σ_t(x)‖_F²)`.
    pub fn posterior_cov_trace_frobenius(&self, t: f64, x: &[f64]) -> Result<(f64, f64)> {
        match self {
            Target::Cloud(c) => c.posterior_cov_trace_frobenius(t, x),
            Target::Subspace(g) => {
                check_query(g.dim(), x)?;
                g.posterior_cov_trace_frobenius(t)
            }
        }
    }

    /// Full posterior covariance, `d × d` row-major.
    pub fn posterior_cov(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Target::Cloud(c) => c.posterior_cov(t, x),
            Target::Subspace(g) => {
                check_time(t)?;
                check_query(g.dim(), x)?;
                let d = g.dim();
                let v = g.posterior_var(t);
                let mut out = vec![0.0; d * d];
                for u in g.basis_rows().chunks_exact(d) {
                    for a in 0..d {
                        for b in 0..d {
                            out[a * d + b] += v * u[a] * u[b];
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// Exact score `(e^{-t} μ_t(x) - x) / σ_t²`.
    pub fn score_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.posterior_mean_into(t, x, out)?;
        let a = (-t).exp();
        let v = sigma_sq_raw(t);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = (a * *o - xi) / v;
        }
        Ok(())
    }

    pub fn score(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.score_into(t, x, &mut out)?;
        Ok(out)
    }

    /// SHA-256 over the numeric content of the target.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |vals: &[f64]| {
            for v in vals {
                h.update(v.to_le_bytes());
            }
        };
        match self {
            Target::Cloud(c) => {
                put(&[0.0, c.dim() as f64, c.declared_dim() as f64, c.radius()]);
                put(c.points());
                put(c.weights());
            }
            Target::Subspace(g) => {
                put(&[1.0, g.dim() as f64, g.scale()]);
                put(g.basis_rows());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn summary(&self) -> TargetSummary {
        let (kind, points, span_rank) = match self {
            Target::Cloud(c) => ("point-cloud", Some(c.len()), c.span_rank()),
            Target::Subspace(g) => ("subspace-gaussian", None, g.k()),
        };
        TargetSummary {
            kind: kind.into(),
            dim: self.dim(),
            intrinsic_dim: self.intrinsic_dim(),
            points,
            span_rank,
            radius: self.radius(),
            second_moment: self.second_moment(),
            fingerprint: self.fingerprint(),
        }
    }
}

/// `n` draws of `e^{-t} X_0 + σ_t W`; row `i` uses stream `i` of `seed`.
pub fn forward_sample(target: &Target, t: f64, n: usize, seed: u64, workers: Workers) -> Result<SampleBatch> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(domain(format!("forward time must be >= 0, got {t}")));
    }
    if n == 0 {
        return Err(domain("forward_sample needs n >= 1"));
    }
    let a = (-t).exp();
    let s = sigma_sq_raw(t).sqrt();
    let rows = map_indexed(n, workers, |i| {
        let mut rng = Substream::new(seed, i as u64).rng();
        let (x0, w) = target.sample_pair(&mut rng);
        x0.iter().zip(&w).map(|(x, z)| a * x + s * z).collect::<Vec<f64>>()
    });
    SampleBatch::new(
        TimeLabel::forward(t),
        target.dim(),
        rows.concat(),
        Provenance {
            root_seed: seed,
            first_stream: 0,
        },
    )
}
