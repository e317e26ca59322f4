//! Named point-cloud generators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::linalg::random_orthonormal_rows;
use crate::rng::Substream;

use super::PointCloud;

pub const NAMES: [&str; 4] = ["subspace-ball", "circle", "two-points", "cube-skeleton"];

pub const DEFAULT_POINTS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub name: String,
    pub dim: usize,
    pub points: usize,
    /// Latent dimension of `subspace-ball` and `cube-skeleton`.
    pub latent_dim: usize,
    pub radius: f64,
    /// Overrides the intrinsic dimension recorded on the cloud.
    pub declared_dim: Option<usize>,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            name: "circle".into(),
            dim: 16,
            points: DEFAULT_POINTS,
            latent_dim: 2,
            radius: 1.0,
            declared_dim: None,
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    pub fn new(name: &str, dim: usize) -> Self {
        GeneratorSpec {
            name: name.into(),
            dim,
            ..GeneratorSpec::default()
        }
    }
}

fn embed(coords: &[f64], k: usize, rows: &[f64], d: usize) -> Vec<f64> {
    let m = coords.len() / k;
    let mut out = vec![0.0; m * d];
    for (i, c) in coords.chunks_exact(k).enumerate() {
        let o = &mut out[i * d..(i + 1) * d];
        for (cj, u) in c.iter().zip(rows.chunks_exact(d)) {
            for (oi, ui) in o.iter_mut().zip(u) {
                *oi += cj * ui;
            }
        }
    }
    out
}

/// Builds the named cloud. Generation is deterministic in `spec.seed`.
pub fn generate(spec: &GeneratorSpec) -> Result<PointCloud> {
    let d = spec.dim;
    let m = spec.points;
    let r = spec.radius;
    if d == 0 || m == 0 {
        return Err(config("generator needs d >= 1 and at least one point"));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(config(format!("radius must be positive, got {r}")));
    }
    let mut rng = Substream::new(spec.seed, 0).rng();
    let (points, k_default) = match spec.name.as_str() {
        "subspace-ball" => {
            let k = spec.latent_dim;
            if k == 0 || k > d {
                return Err(config(format!("subspace-ball needs 1 <= k <= d, got k = {k}")));
            }
            let rows = random_orthonormal_rows(&mut rng, d, k);
            let mut coords = Vec::with_capacity(m * k);
            for _ in 0..m {
                let mut z = crate::rng::standard_normal_vec(&mut rng, k);
                let norm = crate::linalg::norm_sq(&z).sqrt();
                let rad = r * rng.random::<f64>().powf(1.0 / k as f64);
                z.iter_mut().for_each(|v| *v *= rad / norm);
                coords.extend(z);
            }
            (embed(&coords, k, &rows, d), k)
        }
        "circle" => {
            if d < 2 {
                return Err(config("circle needs d >= 2"));
            }
            let rows = random_orthonormal_rows(&mut rng, d, 2);
            let coords: Vec<f64> = (0..m)
                .flat_map(|_| {
                    let th = std::f64::consts::TAU * rng.random::<f64>();
                    [r * th.cos(), r * th.sin()]
                })
                .collect();
            (embed(&coords, 2, &rows, d), 1)
        }
        "two-points" => {
            let mut pts = vec![0.0; 2 * d];
            pts[0] = r;
            pts[d] = -r;
            (pts, 1)
        }
        "cube-skeleton" => {
            let k = spec.latent_dim;
            if k == 0 || k > d {
                return Err(config(format!("cube-skeleton needs 1 <= k <= d, got k = {k}")));
            }
            let rows = random_orthonormal_rows(&mut rng, d, k);
            let side = r / (k as f64).sqrt();
            let mut coords = Vec::with_capacity(m * k);
            for _ in 0..m {
                let free = rng.random_range(0..k);
                for j in 0..k {
                    let c = if j == free {
                        rng.random_range(-1.0..=1.0)
                    } else if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    };
                    coords.push(side * c);
                }
            }
            (embed(&coords, k, &rows, d), 1)
        }
        other => {
            return Err(config(format!(
                "unknown generator {other:?}; expected one of {NAMES:?}"
            )))
        }
    };
    // Rounding in the embedding can push a norm a few ulps past R.
    let declared = spec.declared_dim.unwrap_or(k_default);
    PointCloud::new(d, points, None, declared, Some(r * (1.0 + 1e-12)))
}
