//! Counter-based random streams.
//!
//! A [`Stream`] is fully determined by a seed and a key (a short tuple of
//! integers such as `(epoch, step, sample)`) plus a domain tag. Each stream is
//! a ChaCha8 generator whose 256-bit seed is a hash of that triple, so the
//! n-th output is a pure function of `(seed, domain, key, n)`. Streams for
//! different samples, layers or replicas can be created in any order, on any
//! thread, and always produce the same values.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Domain tags keep streams used for different purposes apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Template = 1,
    Instance = 2,
    Distortion = 3,
    Shuffle = 4,
    Init = 5,
    Ssmp = 6,
    Dropout = 7,
    Demo = 8,
    Test = 9,
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64, domain: Domain, key: &[u64]) -> Self {
        let mut h = mix64(seed ^ 0xD134_2543_DE82_EF95);
        h = mix64(h ^ (domain as u64).wrapping_mul(GOLDEN));
        for &k in key {
            h = mix64(h.wrapping_add(GOLDEN) ^ mix64(k.wrapping_add(0xA076_1D64_78BD_642F)));
        }
        let mut bytes = [0u8; 32];
        let mut w = h;
        for chunk in bytes.chunks_mut(8) {
            w = mix64(w.wrapping_add(GOLDEN));
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        Self { rng: ChaCha8Rng::from_seed(bytes) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform draw in `[-half_width, half_width)`; exactly zero when the
    /// half width is zero.
    pub fn symmetric(&mut self, half_width: f64) -> f64 {
        let u = self.unit();
        if half_width == 0.0 {
            0.0
        } else {
            half_width * (2.0 * u - 1.0)
        }
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_in(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.random_range(lo..=hi)
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }
}
