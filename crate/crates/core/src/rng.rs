//! Seeded random streams.
//!
//! Every stochastic stage derives its generator from one experiment seed and a
//! stage name, so a stage can be re-run in isolation and still see the same
//! stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StageRng = ChaCha8Rng;

/// Generator seeded directly from an integer.
pub fn seeded(seed: u64) -> StageRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for the named substream of `seed`.
pub fn substream(seed: u64, name: &str) -> StageRng {
    ChaCha8Rng::from_seed(substream_key(seed, name))
}

/// Integer seed for the named substream, for APIs that take a plain `u64`.
pub fn substream_seed(seed: u64, name: &str) -> u64 {
    let key = substream_key(seed, name);
    u64::from_le_bytes(key[..8].try_into().expect("8 bytes"))
}

fn substream_key(seed: u64, name: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    hasher.finalize().into()
}
