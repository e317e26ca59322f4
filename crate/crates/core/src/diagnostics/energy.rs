use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::error::{config, Error, Result};
use crate::exec::{map_chunks, map_indexed, Workers};
use crate::rng::Substream;

const CHUNK: usize = 64;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    crate::linalg::dist_sq(a, b).sqrt()
}

/// `Σ_{i<j} ‖x_i - x_j‖` over the rows selected by `idx`.
fn within_sum(data: &[f64], d: usize, idx: &[usize], workers: Workers) -> f64 {
    let row = |i: usize| &data[idx[i] * d..(idx[i] + 1) * d];
    map_chunks(idx.len(), CHUNK, workers, |range| {
        let mut s = 0.0;
        for i in range {
            for j in (i + 1)..idx.len() {
                s += dist(row(i), row(j));
            }
        }
        s
    })
    .into_iter()
    .sum()
}

fn cross_sum(data: &[f64], d: usize, ia: &[usize], ib: &[usize], workers: Workers) -> f64 {
    map_chunks(ia.len(), CHUNK, workers, |range| {
        let mut s = 0.0;
        for i in range {
            let a = &data[ia[i] * d..(ia[i] + 1) * d];
            for &j in ib {
                s += dist(a, &data[j * d..(j + 1) * d]);
            }
        }
        s
    })
    .into_iter()
    .sum()
}

fn statistic(data: &[f64], d: usize, ia: &[usize], ib: &[usize], workers: Workers) -> f64 {
    let (na, nb) = (ia.len() as f64, ib.len() as f64);
    let ab = cross_sum(data, d, ia, ib, workers) / (na * nb);
    let aa = 2.0 * within_sum(data, d, ia, workers) / (na * (na - 1.0));
    let bb = 2.0 * within_sum(data, d, ib, workers) / (nb * (nb - 1.0));
    2.0 * ab - aa - bb
}

fn pooled(a: &SampleBatch, b: &SampleBatch) -> Result<Vec<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::Shape {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if a.len() < 2 || b.len() < 2 {
        return Err(config("energy distance needs at least two samples per batch"));
    }
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Ok(data)
}

/// U-statistic estimate of `2E‖A-B‖ - E‖A-A'‖ - E‖B-B'‖`.
pub fn energy_distance(a: &SampleBatch, b: &SampleBatch, workers: Workers) -> Result<f64> {
    let data = pooled(a, b)?;
    let ia: Vec<usize> = (0..a.len()).collect();
    let ib: Vec<usize> = (a.len()..a.len() + b.len()).collect();
    Ok(statistic(&data, a.dim(), &ia, &ib, workers))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationTest {
    pub observed: f64,
    /// Statistic under each relabelling, sorted ascending.
    pub null: Vec<f64>,
}

impl PermutationTest {
    /// Empirical `q`-quantile of the null statistics.
    pub fn quantile(&self, q: f64) -> f64 {
        let m = self.null.len();
        let pos = ((q * m as f64).ceil() as usize).clamp(1, m) - 1;
        self.null[pos]
    }

    /// `(1 + #{null >= observed}) / (1 + permutations)`.
    pub fn p_value(&self) -> f64 {
        let ge = self.null.iter().filter(|v| **v >= self.observed).count();
        (1 + ge) as f64 / (1 + self.null.len()) as f64
    }
}

/// Energy distance with a permutation null. Permutation `p` shuffles the
/// pooled labels with stream `p` of `seed`.
pub fn energy_permutation_test(
    a: &SampleBatch,
    b: &SampleBatch,
    permutations: usize,
    seed: u64,
    workers: Workers,
) -> Result<PermutationTest> {
    if permutations == 0 {
        return Err(config("need at least one permutation"));
    }
    let data = pooled(a, b)?;
    let d = a.dim();
    let na = a.len();
    let total = na + b.len();
    let all: Vec<usize> = (0..total).collect();
    let observed = statistic(&data, d, &all[..na], &all[na..], workers);
    let mut null = map_indexed(permutations, workers, |p| {
        let mut idx = all.clone();
        idx.shuffle(&mut Substream::new(seed, p as u64).rng());
        statistic(&data, d, &idx[..na], &idx[na..], Workers::sequential())
    });
    null.sort_by(f64::total_cmp);
    Ok(PermutationTest { observed, null })
}
