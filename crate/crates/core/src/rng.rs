//! Deterministic random streams keyed by labels.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha20Rng;

/// A ChaCha stream seeded from the SHA-256 digest of `parts` joined by `|`.
pub fn derive_rng(parts: &[&str]) -> Rng {
    let digest = Sha256::digest(parts.join("|").as_bytes());
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(seed)
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
