//! Randomly shifted Halton points in the unit cube.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut out) = (inv, 0.0);
    while i > 0 {
        out += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    out
}

/// Halton sequence with a Cranley–Patterson rotation drawn from `seed`.
#[derive(Debug, Clone)]
pub struct ShiftedHalton {
    shift: Vec<f64>,
    index: u64,
}

impl ShiftedHalton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim <= PRIMES.len(), "at most {} dimensions", PRIMES.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ShiftedHalton {
            shift: (0..dim).map(|_| rng.random::<f64>()).collect(),
            index: 1,
        }
    }

    /// The `i`-th point (1-based), coordinates in `[0, 1)`.
    pub fn point(&self, i: u64) -> Vec<f64> {
        self.shift
            .iter()
            .zip(PRIMES)
            .map(|(s, p)| (radical_inverse(i, p) + s).fract())
            .collect()
    }
}

impl Iterator for ShiftedHalton {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        let p = self.point(self.index);
        self.index += 1;
        Some(p)
    }
}
