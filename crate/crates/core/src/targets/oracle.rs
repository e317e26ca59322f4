use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::linalg::norm_sq;
use crate::noise::Schedule;
use crate::rng::{standard_normal_vec, Substream};

use super::Target;

/// Unit direction along which a perturbed oracle shifts the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DirectionField {
    /// `x/‖x‖`, and `e_1` at the origin.
    Radial,
    /// One Gaussian direction per step, drawn from stream `n` of `seed`.
    FixedRandom { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    None,
    /// `ŝ = s + ε_n u(x)` on step `n`.
    Directional {
        magnitudes: Vec<f64>,
        intervals: Vec<f64>,
        field: DirectionField,
        directions: Vec<f64>,
    },
}

#[derive(Serialize)]
struct OracleDescriptor<'a> {
    target: String,
    magnitudes: Option<&'a [f64]>,
    field: Option<DirectionField>,
}

/// Score, posterior mean and posterior trace evaluator for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOracle {
    target: Target,
    perturbation: Perturbation,
}

impl ScoreOracle {
    pub fn exact(target: Target) -> Self {
        ScoreOracle {
            target,
            perturbation: Perturbation::None,
        }
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn perturbation(&self) -> &Perturbation {
        &self.perturbation
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    /// Spreads `budget` uniformly in time: `ε_n² = budget / (T - δ)`, so that
    /// `Σ_n (t_{n+1} - t_n) ε_n² = budget`.
    pub fn perturb(&self, budget: f64, schedule: &Schedule, field: DirectionField) -> Result<Self> {
        if !(budget >= 0.0) || !budget.is_finite() {
            return Err(config(format!("score error budget must be >= 0, got {budget}")));
        }
        let eps = (budget / (schedule.horizon() - schedule.early_stop())).sqrt();
        self.with_magnitudes(schedule, vec![eps; schedule.steps()], field)
    }

    /// Perturbation with explicit per-step magnitudes `ε_n`.
    pub fn with_magnitudes(&self, schedule: &Schedule, magnitudes: Vec<f64>, field: DirectionField) -> Result<Self> {
        let n = schedule.steps();
        if magnitudes.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: magnitudes.len(),
            });
        }
        if magnitudes.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return Err(config("per-step magnitudes must be finite and >= 0"));
        }
        let d = self.dim();
        let directions = match field {
            DirectionField::Radial => Vec::new(),
            DirectionField::FixedRandom { seed } => (0..n)
                .flat_map(|i| {
                    let mut v = standard_normal_vec(&mut Substream::new(seed, i as u64).rng(), d);
                    let norm = norm_sq(&v).sqrt();
                    v.iter_mut().for_each(|x| *x /= norm);
                    v
                })
                .collect(),
        };
        Ok(ScoreOracle {
            target: self.target.clone(),
            perturbation: Perturbation::Directional {
                magnitudes,
                intervals: (0..n).map(|i| schedule.interval(i)).collect(),
                field,
                directions,
            },
        })
    }

    /// `Σ_n (t_{n+1} - t_n) ε_n²` recomputed from the stored magnitudes.
    pub fn declared_budget(&self) -> f64 {
        match &self.perturbation {
            Perturbation::None => 0.0,
            Perturbation::Directional {
                magnitudes,
                intervals,
                ..
            } => magnitudes.iter().zip(intervals).map(|(e, h)| h * e * e).sum(),
        }
    }

    pub fn magnitude(&self, step: usize) -> f64 {
        match &self.perturbation {
            Perturbation::None => 0.0,
            Perturbation::Directional { magnitudes, .. } => magnitudes.get(step).copied().unwrap_or(0.0),
        }
    }

    /// Exact score `s_t(x)`.
    pub fn score(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.target.score(t, x)
    }

    /// Score estimate used on step `step`, evaluated at forward time `t`.
    pub fn score_at(&self, step: usize, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.target.score_into(t, x, out)?;
        if let Perturbation::Directional {
            magnitudes,
            field,
            directions,
            ..
        } = &self.perturbation
        {
            let eps = *magnitudes.get(step).ok_or_else(|| {
                domain(format!(
                    "step {step} outside the {} perturbed steps",
                    magnitudes.len()
                ))
            })?;
            if eps == 0.0 {
                return Ok(());
            }
            let d = x.len();
            match field {
                DirectionField::Radial => {
                    let norm = norm_sq(x).sqrt();
                    if norm > 0.0 {
                        for (o, xi) in out.iter_mut().zip(x) {
                            *o += eps * xi / norm;
                        }
                    } else {
                        out[0] += eps;
                    }
                }
                DirectionField::FixedRandom { .. } => {
                    for (o, u) in out.iter_mut().zip(&directions[step * d..(step + 1) * d]) {
                        *o += eps * u;
                    }
                }
            }
        }
        Ok(())
    }

    /// `μ̂ = (x + σ_t² ŝ) / e^{-t}` for step `step`.
    pub fn posterior_mean_at(&self, step: usize, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut s = vec![0.0; x.len()];
        self.score_at(step, t, x, &mut s)?;
        let v = crate::noise::sigma_sq_raw(t);
        let inv_a = t.exp();
        Ok(x.iter().zip(&s).map(|(xi, si)| (xi + v * si) * inv_a).collect())
    }

    /// Hash of the target content and the perturbation settings.
    pub fn config_hash(&self) -> String {
        let (magnitudes, field) = match &self.perturbation {
            Perturbation::None => (None, None),
            Perturbation::Directional {
                magnitudes, field, ..
            } => (Some(magnitudes.as_slice()), Some(*field)),
        };
        crate::batch::json_hash(&OracleDescriptor {
            target: self.target.fingerprint(),
            magnitudes,
            field,
        })
        .expect("descriptor serializes")
    }
}
