//! Portable seeded randomness.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha::ChaCha8Rng`),
//! whose output stream is fixed by its seed on every platform. Sub-seeds are
//! derived with the SplitMix64 finalizer, uniform doubles take the top 53 bits
//! of a `u64`, and Gaussians use Box-Muller over `libm`, a pure-Rust port of
//! musl's math library, so generated worlds and partitions are bit-identical
//! across targets.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream tags used to derive independent sub-seeds from one top-level seed.
pub mod tag {
    pub const FEATURES: u64 = 0x6665_6174;
    pub const SPECIES_MAP: u64 = 0x7370_6563;
    pub const JITTER: u64 = 0x6a69_7474;
    pub const SPARSITY: u64 = 0x7370_6172;
    pub const CHECKLISTS: u64 = 0x6368_6b6c;
    pub const COORDINATES: u64 = 0x636f_6f72;
    pub const SPLITS: u64 = 0x7370_6c74;
    pub const PRIORS: u64 = 0x7072_6972;
    pub const MEMBERS: u64 = 0x6d65_6d62;
    pub const PARTITION: u64 = 0x7061_7274;
    pub const INIT: u64 = 0x696e_6974;
    pub const SHUFFLE: u64 = 0x7368_7566;
    pub const DROPOUT: u64 = 0x6472_6f70;
    pub const RUNS: u64 = 0x7275_6e73;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a stream discriminator.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream.rotate_left(17) ^ 0xa076_1d64_78bd_642f)
}

/// 64-bit FNV-1a, used to turn string identifiers into stream discriminators.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seeded generator with the handful of draws the crate needs.
#[derive(Debug, Clone)]
pub struct PortableRng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl PortableRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn derived(seed: u64, stream: u64) -> Self {
        Self::new(derive_seed(seed, stream))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal draw (Box-Muller, both outputs used).
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    /// Uniform integer in `0..n` by rejection, free of modulo bias.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
