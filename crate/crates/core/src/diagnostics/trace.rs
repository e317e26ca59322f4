use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::exec::{try_map_indexed, Workers};
use crate::noise::sigma_sq_raw;
use crate::rng::Substream;
use crate::targets::Target;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    /// Summed in index order so the result does not depend on how the values
    /// were produced.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate {
            value: mean,
            stderr: (var / n as f64).sqrt(),
            n,
        }
    }
}

/// `e^{-u} X_0 + σ_u W` for the `(X_0, W)` pair of stream `i`. Reusing the
/// pair across `u` couples the estimates at different times.
fn noised(target: &Target, u: f64, seed: u64, i: usize) -> Vec<f64> {
    let (x0, w) = target.sample_pair(&mut Substream::new(seed, i as u64).rng());
    let a = (-u).exp();
    let s = sigma_sq_raw(u).sqrt();
    x0.iter().zip(&w).map(|(x, z)| a * x + s * z).collect()
}

fn check_forward_time(u: f64) -> Result<()> {
    if !(u > 0.0) || !u.is_finite() {
        return Err(domain(format!("forward time must be positive, got {u}")));
    }
    Ok(())
}

/// Monte Carlo estimate of `E[Tr Σ_u(X_u)]` with `X_u` drawn from the
/// forward marginal and the trace evaluated exactly.
pub fn mc_mean_trace(target: &Target, u: f64, n: usize, seed: u64, workers: Workers) -> Result<Estimate> {
    check_forward_time(u)?;
    if n == 0 {
        return Err(domain("need at least one sample"));
    }
    let vals = try_map_indexed(n, workers, |i| target.posterior_cov_trace(u, &noised(target, u, seed, i)))?;
    Ok(Estimate::from_samples(&vals))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCurve {
    pub times: Vec<f64>,
    pub estimates: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub n: usize,
    pub seed: u64,
}

/// Estimates the trace at every grid time with common random numbers.
pub fn trace_curve(target: &Target, grid: &[f64], n: usize, seed: u64, workers: Workers) -> Result<TraceCurve> {
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(config("trace grid must be strictly increasing in forward time"));
    }
    let mut estimates = Vec::with_capacity(grid.len());
    let mut stderrs = Vec::with_capacity(grid.len());
    for &u in grid {
        let e = mc_mean_trace(target, u, n, seed, workers)?;
        estimates.push(e.value);
        stderrs.push(e.stderr);
    }
    Ok(TraceCurve {
        times: grid.to_vec(),
        estimates,
        stderrs,
        n,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneReport {
    pub pass: bool,
    /// Smallest `ê_{j+1} - ê_j + 4·√(se_j² + se_{j+1}²)` over the grid.
    pub worst_margin: f64,
    /// Indices `j` where the check failed.
    pub violations: Vec<usize>,
}

/// One-sided check that the curve is non-decreasing in forward time up to
/// four combined standard errors.
pub fn check_trace_monotone(curve: &TraceCurve) -> MonotoneReport {
    let mut worst = f64::INFINITY;
    let mut violations = Vec::new();
    for j in 0..curve.estimates.len().saturating_sub(1) {
        let slack = 4.0 * curve.stderrs[j].hypot(curve.stderrs[j + 1]);
        let margin = curve.estimates[j + 1] - curve.estimates[j] + slack;
        worst = worst.min(margin);
        if margin < 0.0 {
            violations.push(j);
        }
    }
    MonotoneReport {
        pass: violations.is_empty(),
        worst_margin: worst,
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorBoundRatio {
    pub u: f64,
    pub estimate: Estimate,
    /// `min{E‖X_0‖², σ_u²/(1-σ_u²) · k ln k}`
    pub bound: f64,
    pub ratio: f64,
}

/// `min{E‖X_0‖², σ_u²/(1-σ_u²) · k ln k}`.
pub fn posvar_bound(target: &Target, u: f64, k_declared: usize) -> Result<f64> {
    check_forward_time(u)?;
    if k_declared < 2 {
        return Err(config(format!(
            "the k log k bound is vacuous below k = 2, got k = {k_declared}"
        )));
    }
    let v = sigma_sq_raw(u);
    let k = k_declared as f64;
    Ok(target.second_moment().min(v / (1.0 - v) * k * k.ln()))
}

/// `E[Tr Σ_u] / min{E‖X_0‖², σ_u²/(1-σ_u²) · k ln k}`. Needs `k >= 2`:
/// the second branch vanishes at `k = 1`.
pub fn posvar_bound_ratio(
    target: &Target,
    u: f64,
    k_declared: usize,
    n: usize,
    seed: u64,
    workers: Workers,
) -> Result<PosteriorBoundRatio> {
    if k_declared < 2 {
        return Err(config(format!(
            "the k log k bound is vacuous below k = 2, got k = {k_declared}"
        )));
    }
    let estimate = mc_mean_trace(target, u, n, seed, workers)?;
    let bound = posvar_bound(target, u, k_declared)?;
    let ratio = if estimate.value == 0.0 { 0.0 } else { estimate.value / bound };
    Ok(PosteriorBoundRatio {
        u,
        estimate,
        bound,
        ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub u: f64,
    pub h: f64,
    /// `E‖Σ_u‖_F²`
    pub frobenius: f64,
    /// `σ_u⁴/(2(1-σ_u²)) · d/du E Tr Σ_u` by central differences.
    pub derivative_side: f64,
    /// Mean of the per-sample differences of the two sides.
    pub residual: f64,
    pub mc_stderr: f64,
    /// Richardson estimate of the finite-difference error.
    pub fd_error: f64,
    pub n: usize,
}

impl LocalizationReport {
    pub fn combined_error(&self) -> f64 {
        self.mc_stderr.hypot(self.fd_error)
    }

    /// `|residual| / |frobenius|`, or the absolute residual when both sides
    /// vanish.
    pub fn relative_residual(&self) -> f64 {
        if self.frobenius == 0.0 {
            self.residual.abs()
        } else {
            self.residual.abs() / self.frobenius.abs()
        }
    }

    pub fn within(&self, errors: f64) -> bool {
        self.residual.abs() <= errors * self.combined_error()
    }
}

/// Compares both sides of `E‖Σ_u‖_F² = σ_u⁴/(2(1-σ_u²)) · d/du E Tr Σ_u`.
///
/// The derivative is a central difference with step `h`, taken pathwise on
/// the coupled samples `e^{-u} X_0 + σ_u W`.
pub fn localization_residual(
    target: &Target,
    u: f64,
    h: f64,
    n: usize,
    seed: u64,
    workers: Workers,
) -> Result<LocalizationReport> {
    check_forward_time(u)?;
    if !(h > 0.0) || !(u - 2.0 * h > 0.0) {
        return Err(domain(format!("need 0 < 2h < u, got u = {u}, h = {h}")));
    }
    if n == 0 {
        return Err(domain("need at least one sample"));
    }
    let v = sigma_sq_raw(u);
    let scale = v * v / (2.0 * (1.0 - v));
    let rows = try_map_indexed(n, workers, |i| -> Result<[f64; 3]> {
        let (x0, w) = target.sample_pair(&mut Substream::new(seed, i as u64).rng());
        let at = |t: f64| -> Vec<f64> {
            let a = (-t).exp();
            let s = sigma_sq_raw(t).sqrt();
            x0.iter().zip(&w).map(|(x, z)| a * x + s * z).collect()
        };
        let (_, fro) = target.posterior_cov_trace_frobenius(u, &at(u))?;
        let tr = |t: f64| target.posterior_cov_trace(t, &at(t));
        let d1 = (tr(u + h)? - tr(u - h)?) / (2.0 * h);
        let d2 = (tr(u + 2.0 * h)? - tr(u - 2.0 * h)?) / (4.0 * h);
        Ok([fro, d1, d2])
    })?;
    let fro: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let resid: Vec<f64> = rows.iter().map(|r| r[0] - scale * r[1]).collect();
    let d1 = rows.iter().map(|r| r[1]).sum::<f64>() / n as f64;
    let d2 = rows.iter().map(|r| r[2]).sum::<f64>() / n as f64;
    let r = Estimate::from_samples(&resid);
    Ok(LocalizationReport {
        u,
        h,
        frobenius: Estimate::from_samples(&fro).value,
        derivative_side: scale * d1,
        residual: r.value,
        mc_stderr: r.stderr,
        fd_error: scale * (d1 - d2).abs() / 3.0,
        n,
    })
}
