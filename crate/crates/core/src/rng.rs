//! Deterministic random numbers for sampling and distractor selection.
//!
//! Algorithm: ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`, and unbiased bounded integers drawn by rejection from
//! `next_u64`. Both are fixed for the life of the on-disk formats; changing
//! either changes every recorded noise set, so bump [`SAMPLER_VERSION`] if
//! that ever happens.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Identifier written into run provenance next to every seed.
pub const SAMPLER_VERSION: &str = "chacha8-rejection-v1";

pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform integer in `0..bound`. `bound` must be positive.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        // Largest multiple of `bound` representable in u64; draws at or above
        // it are rejected so every residue is equally likely.
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.inner.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }
}

/// Mixes a base seed with a string key (e.g. a question id) into a new seed.
pub fn derive_seed(base: u64, key: &str) -> u64 {
    let digest = crate::digest::sha256_parts(&[&base.to_le_bytes(), key.as_bytes()]);
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}
