//! The DDPM reverse-time sampler
//! `y ← (1/√α_n)(y + (1-α_n) ŝ_{T-t_n}(y)) + noise_std·z`.

use serde::{Deserialize, Serialize};

use crate::batch::{Provenance, SampleBatch, TimeLabel};
use crate::error::{config, domain, Error, Result};
use crate::exec::{try_map_indexed, Workers};
use crate::noise::{Schedule, StepCoefficients};
use crate::rng::{fill_standard_normal, Substream};
use crate::targets::ScoreOracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerVariant {
    Ddpm,
    /// Noise variance `1 - α_n` instead of `(1-α_n)(1-ᾱ_{n+1})/(1-ᾱ_n)`.
    AltNoise,
    /// Drift scale `2 - √α_n` instead of `1/√α_n`.
    AltDrift,
}

impl SamplerVariant {
    pub const ALL: [SamplerVariant; 3] = [SamplerVariant::Ddpm, SamplerVariant::AltNoise, SamplerVariant::AltDrift];

    pub fn name(self) -> &'static str {
        match self {
            SamplerVariant::Ddpm => "ddpm",
            SamplerVariant::AltNoise => "alt-noise",
            SamplerVariant::AltDrift => "alt-drift",
        }
    }

    /// Coefficients this variant uses in place of `c`.
    pub fn coefficients(self, c: &StepCoefficients) -> StepCoefficients {
        let mut out = *c;
        match self {
            SamplerVariant::Ddpm => {}
            SamplerVariant::AltNoise => out.noise_std = c.one_minus_alpha.sqrt(),
            SamplerVariant::AltDrift => {
                out.drift_scale = 2.0 - c.alpha.sqrt();
                out.score_weight = out.drift_scale * c.one_minus_alpha;
            }
        }
        out
    }
}

impl std::fmt::Display for SamplerVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SamplerVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplerVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| config(format!("unknown sampler variant {s:?}")))
    }
}

/// One update written into `out`. Rejects shape mismatches and non-finite
/// inputs or results.
pub fn ddpm_step_into(y: &[f64], s_hat: &[f64], c: &StepCoefficients, z: &[f64], out: &mut [f64]) -> Result<()> {
    let d = y.len();
    for len in [s_hat.len(), z.len(), out.len()] {
        if len != d {
            return Err(Error::Shape { expected: d, got: len });
        }
    }
    if s_hat.iter().chain(y).chain(z).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("step input".into()));
    }
    for i in 0..d {
        out[i] = c.drift_scale * (y[i] + c.one_minus_alpha * s_hat[i]) + c.noise_std * z[i];
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("iterate".into()));
    }
    Ok(())
}

pub fn ddpm_step(y: &[f64], s_hat: &[f64], c: &StepCoefficients, z: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; y.len()];
    ddpm_step_into(y, s_hat, c, z, &mut out)?;
    Ok(out)
}

/// Runs steps `0..stop` from a standard normal start and returns `Y_{t_stop}`.
pub fn run_chain_until(
    oracle: &ScoreOracle,
    schedule: &Schedule,
    variant: SamplerVariant,
    stream: Substream,
    stop: usize,
) -> Result<Vec<f64>> {
    if stop > schedule.steps() {
        return Err(domain(format!(
            "stop step {stop} beyond N = {}",
            schedule.steps()
        )));
    }
    let d = oracle.dim();
    let mut rng = stream.rng();
    let mut y = vec![0.0; d];
    fill_standard_normal(&mut rng, &mut y);
    let mut s = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut next = vec![0.0; d];
    for n in 0..stop {
        let c = variant.coefficients(&schedule.step_coeffs(n)?);
        oracle
            .score_at(n, c.forward_time, &y, &mut s)
            .map_err(|e| e.at_step(n))?;
        fill_standard_normal(&mut rng, &mut z);
        ddpm_step_into(&y, &s, &c, &z, &mut next).map_err(|e| e.at_step(n))?;
        std::mem::swap(&mut y, &mut next);
    }
    Ok(y)
}

/// Runs all `N` steps and returns `Y_{t_N}`.
pub fn run_chain(oracle: &ScoreOracle, schedule: &Schedule, variant: SamplerVariant, stream: Substream) -> Result<Vec<f64>> {
    run_chain_until(oracle, schedule, variant, stream, schedule.steps())
}

/// `n` independent chains stopped at step `stop`; chain `i` uses stream `i`
/// of `seed`, so the batch does not depend on `workers`.
pub fn run_batch_until(
    oracle: &ScoreOracle,
    schedule: &Schedule,
    variant: SamplerVariant,
    n: usize,
    seed: u64,
    workers: Workers,
    stop: usize,
) -> Result<SampleBatch> {
    if n == 0 {
        return Err(domain("run_batch needs n >= 1"));
    }
    let rows = try_map_indexed(n, workers, |i| {
        run_chain_until(oracle, schedule, variant, Substream::new(seed, i as u64), stop)
            .map_err(|e| e.in_chain(i as u64))
    })?;
    SampleBatch::new(
        TimeLabel::reverse(stop, schedule.forward_time(stop)),
        oracle.dim(),
        rows.concat(),
        Provenance {
            root_seed: seed,
            first_stream: 0,
        },
    )
}

pub fn run_batch(
    oracle: &ScoreOracle,
    schedule: &Schedule,
    variant: SamplerVariant,
    n: usize,
    seed: u64,
    workers: Workers,
) -> Result<SampleBatch> {
    run_batch_until(oracle, schedule, variant, n, seed, workers, schedule.steps())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_rescale() {
        let c = StepCoefficients::from_interval(1.0, 0.1).unwrap();
        let y = [1.0, -2.0];
        let out = ddpm_step(&y, &[0.0, 0.0], &c, &[0.0, 0.0]).unwrap();
        let inv_sqrt_alpha = 1.0 / (-0.2f64).exp().sqrt();
        assert!((out[0] - inv_sqrt_alpha).abs() < 1e-15);
        assert!((out[1] + 2.0 * inv_sqrt_alpha).abs() < 1e-15);
    }

    #[test]
    fn point_mass_step_example() {
        let c = StepCoefficients::from_interval(1.0, 0.1).unwrap();
        let alpha = (-0.2f64).exp();
        let abar = (-2.0f64).exp();
        let y = [1.0, 0.0, 0.0];
        let s: Vec<f64> = y.iter().map(|v| -v / (1.0 - abar)).collect();
        let out = ddpm_step(&y, &s, &c, &[0.0; 3]).unwrap();
        let want = (1.0 - (1.0 - alpha) / (1.0 - abar)) / alpha.sqrt();
        assert!((out[0] - want).abs() < 1e-15);
        assert!((out[0] - 0.873479).abs() < 5e-6);
        assert_eq!(&out[1..], &[0.0, 0.0]);
    }

    #[test]
    fn identity_step() {
        let c = StepCoefficients::from_interval(0.5, 0.0).unwrap();
        let y = [0.3, 0.7];
        assert_eq!(ddpm_step(&y, &[5.0, -1.0], &c, &[1.0, 1.0]).unwrap(), y);
    }

    #[test]
    fn rejects_bad_input() {
        let c = StepCoefficients::from_interval(1.0, 0.1).unwrap();
        assert!(ddpm_step(&[1.0], &[0.0, 0.0], &c, &[0.0]).is_err());
        assert!(ddpm_step(&[f64::NAN], &[0.0], &c, &[0.0]).is_err());
        assert!(ddpm_step(&[1.7e308], &[1e308], &c, &[0.0]).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in SamplerVariant::ALL {
            assert_eq!(v.name().parse::<SamplerVariant>().unwrap(), v);
        }
        assert!("ddim".parse::<SamplerVariant>().is_err());
    }

    #[test]
    fn ddpm_coefficients_unchanged() {
        let c = StepCoefficients::from_interval(2.0, 0.3).unwrap();
        assert_eq!(SamplerVariant::Ddpm.coefficients(&c), c);
    }

    #[test]
    fn variants_agree_to_first_order() {
        // difference / h should shrink linearly with h
        for v in [SamplerVariant::AltNoise, SamplerVariant::AltDrift] {
            let mut prev: Option<f64> = None;
            for p in 4..12 {
                let h = 0.5f64.powi(p);
                let c = StepCoefficients::from_interval(1.0, h).unwrap();
                let a = v.coefficients(&c);
                let diff = (a.drift_scale - c.drift_scale)
                    .abs()
                    .max((a.noise_std.powi(2) - c.noise_std.powi(2)).abs())
                    .max((a.score_weight - c.score_weight).abs());
                assert!(diff < 10.0 * h * h, "{v} h={h}: {diff}");
                if let Some(pr) = prev {
                    let ratio = pr / diff;
                    assert!((3.0..5.0).contains(&ratio), "{v}: ratio {ratio}");
                }
                prev = Some(diff);
            }
        }
    }
}
