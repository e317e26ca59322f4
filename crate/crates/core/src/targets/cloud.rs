use std::io::Read;

use rand::Rng;

use crate::error::{config, Error, Result};
use crate::linalg::{dist_sq, dot, norm_sq, project_rows, row_space_basis};

use super::{check_query, check_time};

/// Weighted empirical measure `Σ_i w_i δ_{x_i}` in `R^d`.
///
/// The points are stored together with their coordinates in an orthonormal
/// basis of their linear span, so posterior evaluations cost `O(M·r)` with
/// `r` the rank of the span rather than `O(M·d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    cumulative: Vec<f64>,
    declared_dim: usize,
    radius: f64,
    basis: Vec<f64>,
    coords: Vec<f64>,
}

/// Posterior of `X_0` given `X_t = x`, in span coordinates.
struct Posterior {
    weights: Vec<f64>,
    mean: Vec<f64>,
}

impl PointCloud {
    /// `points` is `M × d` row-major. Weights default to uniform and must sum
    /// to 1 within `1e-12`. The radius defaults to the largest point norm.
    pub fn new(
        dim: usize,
        points: Vec<f64>,
        weights: Option<Vec<f64>>,
        declared_dim: usize,
        radius: Option<f64>,
    ) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(config(format!(
                "point array of length {} does not hold rows of dimension {dim}",
                points.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point cloud coordinates".into()));
        }
        let m = points.len() / dim;
        let weights = weights.unwrap_or_else(|| vec![1.0 / m as f64; m]);
        if weights.len() != m {
            return Err(Error::Shape {
                expected: m,
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(config("point weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(config(format!("point weights sum to {total}, not 1")));
        }
        let max_norm = points
            .chunks_exact(dim)
            .map(|p| norm_sq(p).sqrt())
            .fold(0.0, f64::max);
        let radius = match radius {
            None => max_norm,
            Some(r) if max_norm <= r * (1.0 + 1e-12) => r,
            Some(r) => {
                return Err(config(format!(
                    "a point has norm {max_norm}, outside the declared radius {r}"
                )))
            }
        };
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        let basis = row_space_basis(&points, m, dim, 1e-10);
        let coords = project_rows(&points, dim, &basis);
        Ok(PointCloud {
            dim,
            points,
            weights,
            log_weights,
            cumulative,
            declared_dim,
            radius,
            basis,
            coords,
        })
    }

    /// Reads one point per row. A column named `weight` (or `w`) holds
    /// unnormalized weights; every other column is a coordinate.
    pub fn from_csv<R: Read>(r: R, declared_dim: usize, radius: Option<f64>) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let wcol = headers
            .iter()
            .position(|h| matches!(h.trim().to_ascii_lowercase().as_str(), "weight" | "w"));
        let dim = headers.len() - usize::from(wcol.is_some());
        let mut points = Vec::new();
        let mut raw_w = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|e| {
                    config(format!("row {}: bad number {field:?}: {e}", line + 1))
                })?;
                if Some(j) == wcol {
                    raw_w.push(v);
                } else {
                    points.push(v);
                }
            }
        }
        let weights = if wcol.is_some() {
            let total: f64 = raw_w.iter().sum();
            if !(total > 0.0) {
                return Err(config("weight column must have a positive sum"));
            }
            Some(raw_w.iter().map(|w| w / total).collect())
        } else {
            None
        };
        PointCloud::new(dim, points, weights, declared_dim, radius)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn declared_dim(&self) -> usize {
        self.declared_dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Dimension of the linear span of the points.
    pub fn span_rank(&self) -> usize {
        self.basis.len() / self.dim
    }

    pub fn second_moment(&self) -> f64 {
        self.points
            .chunks_exact(self.dim)
            .zip(&self.weights)
            .map(|(p, w)| w * norm_sq(p))
            .sum()
    }

    pub(crate) fn sample_clean<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let u: f64 = rng.random::<f64>() * self.cumulative[self.len() - 1];
        let i = self
            .cumulative
            .partition_point(|c| *c <= u)
            .min(self.len() - 1);
        out.copy_from_slice(self.point(i));
    }

    fn posterior(&self, t: f64, x: &[f64]) -> Posterior {
        let r = self.span_rank();
        let a = (-t).exp();
        let inv_two_var = 0.5 / crate::noise::sigma_sq_raw(t);
        let p: Vec<f64> = self.basis.chunks_exact(self.dim).map(|b| dot(b, x)).collect();
        // The component of x orthogonal to the span shifts every logit equally.
        let mut logits: Vec<f64> = if r == 0 {
            self.log_weights.clone()
        } else {
            self.coords
                .chunks_exact(r)
                .zip(&self.log_weights)
                .map(|(c, lw)| {
                    let d2: f64 = c.iter().zip(&p).map(|(ci, pi)| (pi - a * ci).powi(2)).sum();
                    lw - d2 * inv_two_var
                })
                .collect()
        };
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in logits.iter_mut() {
            // e^{-60} is below the rounding of the total
            *l = if *l - max < -60.0 { 0.0 } else { (*l - max).exp() };
            total += *l;
        }
        logits.iter_mut().for_each(|w| *w /= total);
        let mut mean = vec![0.0; r];
        if r > 0 {
            for (w, c) in logits.iter().zip(self.coords.chunks_exact(r)) {
                for (m, ci) in mean.iter_mut().zip(c) {
                    *m += w * ci;
                }
            }
        }
        Posterior {
            weights: logits,
            mean,
        }
    }

    fn lift(&self, coords: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (b, c) in self.basis.chunks_exact(self.dim).zip(coords) {
            for (o, bj) in out.iter_mut().zip(b) {
                *o += c * bj;
            }
        }
    }

    /// Normalized posterior weights `w̃_i ∝ w_i exp(-‖x - e^{-t} x_i‖² / (2σ_t²))`.
    pub fn posterior_weights(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        check_time(t)?;
        check_query(self.dim, x)?;
        Ok(self.posterior(t, x).weights)
    }

    pub fn posterior_mean_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_time(t)?;
        check_query(self.dim, x)?;
        let post = self.posterior(t, x);
        self.lift(&post.mean, out);
        Ok(())
    }

    /// `Tr Cov[X_0 | X_t = x] = Σ_i w̃_i ‖x_i - μ_t(x)‖²`.
    pub fn posterior_cov_trace(&self, t: f64, x: &[f64]) -> Result<f64> {
        check_time(t)?;
        check_query(self.dim, x)?;
        let r = self.span_rank();
        if r == 0 {
            return Ok(0.0);
        }
        let post = self.posterior(t, x);
        Ok(self
            .coords
            .chunks_exact(r)
            .zip(&post.weights)
            .map(|(c, w)| w * dist_sq(c, &post.mean))
            .sum())
    }

    /// Posterior covariance in span coordinates (`r × r`) and the posterior
    /// mean coordinates.
    fn posterior_cov_coords(&self, t: f64, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let r = self.span_rank();
        let post = self.posterior(t, x);
        let mut cov = vec![0.0; r * r];
        if r > 0 {
            let mut dev = vec![0.0; r];
            for (c, w) in self.coords.chunks_exact(r).zip(&post.weights) {
                for j in 0..r {
                    dev[j] = c[j] - post.mean[j];
                }
                for i in 0..r {
                    let wi = w * dev[i];
                    for j in 0..r {
                        cov[i * r + j] += wi * dev[j];
                    }
                }
            }
        }
        (cov, post.mean)
    }

    /// Full `d × d` posterior covariance `Cov[X_0 | X_t = x]`.
    pub fn posterior_cov(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        check_time(t)?;
        check_query(self.dim, x)?;
        let r = self.span_rank();
        let d = self.dim;
        let (c, _) = self.posterior_cov_coords(t, x);
        // B^T C B with basis rows b_i
        let mut tmp = vec![0.0; r * d];
        for i in 0..r {
            for k in 0..r {
                let cik = c[i * r + k];
                let bk = &self.basis[k * d..(k + 1) * d];
                for j in 0..d {
                    tmp[i * d + j] += cik * bk[j];
                }
            }
        }
        let mut out = vec![0.0; d * d];
        for i in 0..r {
            let bi = &self.basis[i * d..(i + 1) * d];
            let row = &tmp[i * d..(i + 1) * d];
            for a in 0..d {
                if bi[a] == 0.0 {
                    continue;
                }
                for b in 0..d {
                    out[a * d + b] += bi[a] * row[b];
                }
            }
        }
        Ok(out)
    }

    /// Trace and squared Frobenius norm of the posterior covariance.
    pub fn posterior_cov_trace_frobenius(&self, t: f64, x: &[f64]) -> Result<(f64, f64)> {
        check_time(t)?;
        check_query(self.dim, x)?;
        let r = self.span_rank();
        let (c, _) = self.posterior_cov_coords(t, x);
        let trace = (0..r).map(|i| c[i * r + i]).sum();
        Ok((trace, norm_sq(&c)))
    }

    /// `∇_x log q_t(x)` of the Gaussian mixture `Σ_i w_i N(e^{-t} x_i, σ_t² I)`,
    /// evaluated directly in `R^d` without the posterior mean.
    pub fn mixture_score(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        check_time(t)?;
        check_query(self.dim, x)?;
        let a = (-t).exp();
        let var = crate::noise::sigma_sq_raw(t);
        let diffs: Vec<Vec<f64>> = self
            .points
            .chunks_exact(self.dim)
            .map(|p| p.iter().zip(x).map(|(pi, xi)| a * pi - xi).collect())
            .collect();
        let logits: Vec<f64> = diffs
            .iter()
            .zip(&self.log_weights)
            .map(|(df, lw)| lw - norm_sq(df) / (2.0 * var))
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut grad = vec![0.0; self.dim];
        let mut total = 0.0;
        for (df, l) in diffs.iter().zip(&logits) {
            let e = (l - max).exp();
            total += e;
            for (g, v) in grad.iter_mut().zip(df) {
                *g += e * v;
            }
        }
        grad.iter_mut().for_each(|g| *g /= total * var);
        Ok(grad)
    }

    /// `log q_t(x)` including the Gaussian normalizing constant.
    pub fn log_density(&self, t: f64, x: &[f64]) -> Result<f64> {
        check_time(t)?;
        check_query(self.dim, x)?;
        let a = (-t).exp();
        let var = crate::noise::sigma_sq_raw(t);
        let logits: Vec<f64> = self
            .points
            .chunks_exact(self.dim)
            .zip(&self.log_weights)
            .map(|(p, lw)| {
                let d2: f64 = p.iter().zip(x).map(|(pi, xi)| (xi - a * pi).powi(2)).sum();
                lw - d2 / (2.0 * var)
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        Ok(lse - 0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI * var).ln())
    }
}
