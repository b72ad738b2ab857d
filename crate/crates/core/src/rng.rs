//! Seeded, splittable random streams for test sources.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::CVec;

pub const DEFAULT_SEED: u64 = 0xC0FFEE;

/// A root seed from which independent numbered streams are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    pub seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        SeedTree { seed }
    }

    /// Stream `id`; distinct ids give independent sequences.
    pub fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(id);
        r
    }
}

impl Default for SeedTree {
    fn default() -> Self {
        SeedTree::new(DEFAULT_SEED)
    }
}

/// Vector of independent standard complex Gaussians.
pub fn complex_gaussian(rng: &mut impl Rng, n: usize) -> CVec {
    CVec::from_fn(n, |_| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        faer::c64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}
