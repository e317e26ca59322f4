use rand::Rng;

use crate::error::{config, Result};
use crate::linalg::dot;
use crate::noise::sigma_sq_raw;

use super::{check_query, check_time};

/// `X_0 = σ₀ U z` with `U` a `d × k` matrix with orthonormal columns and `z`
/// standard normal in `R^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceGaussian {
    dim: usize,
    // columns of U, stored as k rows of length d
    basis: Vec<f64>,
    scale: f64,
}

impl SubspaceGaussian {
    /// `basis_rows` holds the `k` columns of `U`, each of length `dim`.
    pub fn new(dim: usize, basis_rows: Vec<f64>, scale: f64) -> Result<Self> {
        if dim == 0 || basis_rows.len() % dim != 0 {
            return Err(config("basis rows must have length d"));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(config(format!("scale must be positive, got {scale}")));
        }
        let k = basis_rows.len() / dim;
        if k > dim {
            return Err(config(format!("k = {k} exceeds d = {dim}")));
        }
        for i in 0..k {
            for j in 0..=i {
                let g = dot(&basis_rows[i * dim..(i + 1) * dim], &basis_rows[j * dim..(j + 1) * dim]);
                let want = if i == j { 1.0 } else { 0.0 };
                if (g - want).abs() > 1e-10 {
                    return Err(config(format!(
                        "basis columns {i}, {j} are not orthonormal (inner product {g})"
                    )));
                }
            }
        }
        Ok(SubspaceGaussian {
            dim,
            basis: basis_rows,
            scale,
        })
    }

    /// Span of the first `k` coordinate axes, unit scale.
    pub fn axis_aligned(dim: usize, k: usize) -> Result<Self> {
        let mut rows = vec![0.0; k * dim];
        for i in 0..k.min(dim) {
            rows[i * dim + i] = 1.0;
        }
        SubspaceGaussian::new(dim, rows, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.basis.len() / self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn basis_rows(&self) -> &[f64] {
        &self.basis
    }

    pub fn second_moment(&self) -> f64 {
        self.k() as f64 * self.scale * self.scale
    }

    /// Coordinates `Uᵀx`.
    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        self.basis.chunks_exact(self.dim).map(|u| dot(u, x)).collect()
    }

    /// `P x = U Uᵀ x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (u, c) in self.basis.chunks_exact(self.dim).zip(self.coords(x)) {
            for (o, ui) in out.iter_mut().zip(u) {
                *o += c * ui;
            }
        }
        out
    }

    /// Scalar `c_t = σ₀² / (σ_t² + (1-σ_t²)σ₀²)` in `μ_t(x) = e^{-t} c_t P x`.
    pub fn gain(&self, t: f64) -> f64 {
        let s2 = self.scale * self.scale;
        let v = sigma_sq_raw(t);
        s2 / (v + (1.0 - v) * s2)
    }

    /// Posterior variance of `X_0` along each subspace direction.
    pub fn posterior_var(&self, t: f64) -> f64 {
        let s2 = self.scale * self.scale;
        let v = sigma_sq_raw(t);
        s2 * v / (v + (1.0 - v) * s2)
    }

    pub(crate) fn sample_clean<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for u in self.basis.chunks_exact(self.dim) {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            for (o, ui) in out.iter_mut().zip(u) {
                *o += self.scale * z * ui;
            }
        }
    }

    pub fn posterior_mean_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_time(t)?;
        check_query(self.dim, x)?;
        let g = (-t).exp() * self.gain(t);
        for (o, p) in out.iter_mut().zip(self.project(x)) {
            *o = g * p;
        }
        Ok(())
    }

    pub fn posterior_cov_trace(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.k() as f64 * self.posterior_var(t))
    }

    pub fn posterior_cov_trace_frobenius(&self, t: f64) -> Result<(f64, f64)> {
        check_time(t)?;
        let v = self.posterior_var(t);
        let k = self.k() as f64;
        Ok((k * v, k * v * v))
    }

    /// Score of `N(0, σ_t² I + (1-σ_t²)σ₀² P)` computed from the precision
    /// matrix, independently of the posterior mean.
    pub fn gaussian_score(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        check_time(t)?;
        check_query(self.dim, x)?;
        let v = sigma_sq_raw(t);
        let s2 = self.scale * self.scale;
        let par = v + (1.0 - v) * s2;
        let px = self.project(x);
        Ok(x
            .iter()
            .zip(&px)
            .map(|(xi, pi)| -(xi - pi) / v - pi / par)
            .collect())
    }
}
