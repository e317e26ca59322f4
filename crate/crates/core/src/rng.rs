//! Seeded per-item random streams.
//!
//! Item `i` of a batch seeded with `root` draws from ChaCha8 stream `i` of key
//! `root`. Streams are disjoint, so batch contents do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

/// Provenance of one chain or sample: root seed and stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Substream {
    pub root: u64,
    pub index: u64,
}

impl Substream {
    pub fn new(root: u64, index: u64) -> Self {
        Substream { root, index }
    }

    pub fn rng(self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(self.index);
        rng
    }
}

pub fn fill_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

pub fn standard_normal_vec<R: rand::Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    fill_standard_normal(rng, &mut v);
    v
}
