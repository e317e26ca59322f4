use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::exec::{map_chunks, Workers};
use crate::linalg::dist_sq;

const CHUNK: usize = 1024;

/// Farthest-point traversal of a point set.
///
/// Points are first sorted lexicographically so the result depends only on
/// the set. The traversal starts at the smallest point and repeatedly adds
/// the point farthest from the chosen centers (lowest sorted index on ties).
/// `radii[m]` is the covering radius after `m + 1` centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Traversal {
    /// Original indices of the centers, in the order chosen.
    pub centers: Vec<usize>,
    pub radii: Vec<f64>,
}

impl Traversal {
    /// Number of centers needed for every point to lie within `eps` of one.
    pub fn count_at(&self, eps: f64) -> usize {
        self.radii.partition_point(|r| *r > eps) + 1
    }
}

/// Runs the traversal until the covering radius is at most `eps_min`.
pub fn farthest_point_traversal(points: &[f64], dim: usize, eps_min: f64, workers: Workers) -> Result<Traversal> {
    if dim == 0 || points.is_empty() || points.len() % dim != 0 {
        return Err(config("points must be a non-empty array of rows of length d"));
    }
    if !(eps_min > 0.0) {
        return Err(config(format!("cover scale must be positive, got {eps_min}")));
    }
    let n = points.len() / dim;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let pa = &points[a * dim..(a + 1) * dim];
        let pb = &points[b * dim..(b + 1) * dim];
        pa.iter()
            .zip(pb)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let sorted: Vec<f64> = order
        .iter()
        .flat_map(|&i| points[i * dim..(i + 1) * dim].iter().copied())
        .collect();
    let row = |i: usize| &sorted[i * dim..(i + 1) * dim];

    let mut nearest = vec![f64::INFINITY; n];
    let mut centers = Vec::new();
    let mut radii = Vec::new();
    let mut next = 0usize;
    let eps_sq = eps_min * eps_min;
    loop {
        centers.push(order[next]);
        let c = row(next).to_vec();
        // update distances chunk by chunk; each chunk reports its farthest point
        let parts = map_chunks(n, CHUNK, workers, |range| {
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            let mut local = Vec::with_capacity(range.len());
            for i in range.clone() {
                let dn = nearest[i].min(dist_sq(row(i), &c));
                local.push(dn);
                if dn > best.0 {
                    best = (dn, i);
                }
            }
            (range.start, local, best)
        });
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (start, local, b) in parts {
            nearest[start..start + local.len()].copy_from_slice(&local);
            if b.0 > best.0 {
                best = b;
            }
        }
        radii.push(best.0.max(0.0).sqrt());
        if best.0 <= eps_sq {
            break;
        }
        next = best.1;
    }
    Ok(Traversal { centers, radii })
}

/// Size of the greedy `eps`-cover.
pub fn greedy_cover(points: &[f64], dim: usize, eps: f64, workers: Workers) -> Result<usize> {
    Ok(farthest_point_traversal(points, dim, eps, workers)?.count_at(eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverPoint {
    pub eps: f64,
    pub count: usize,
}

/// Cover sizes over a grid of scales from a single traversal.
pub fn cover_sweep(points: &[f64], dim: usize, scales: &[f64], workers: Workers) -> Result<Vec<CoverPoint>> {
    let eps_min = scales.iter().cloned().fold(f64::INFINITY, f64::min);
    let tr = farthest_point_traversal(points, dim, eps_min, workers)?;
    Ok(scales
        .iter()
        .map(|&eps| CoverPoint {
            eps,
            count: tr.count_at(eps),
        })
        .collect())
}
