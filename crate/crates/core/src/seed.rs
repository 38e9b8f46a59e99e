//! Stable seed derivation.
//!
//! Every random draw in the pipeline is fed by a `ChaCha8Rng` whose seed is
//! derived from a parent seed plus a list of string labels. Derivation is a
//! SHA-256 over the parent seed and the labels, so child seeds are independent
//! of execution order and of which other children exist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SeededRng = ChaCha8Rng;

/// Derives a child seed from `parent` and an ordered list of labels.
pub fn derive_seed(parent: u64, labels: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(parent.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_rng(parent: u64, labels: &[&str]) -> SeededRng {
    rng_from_seed(derive_seed(parent, labels))
}

/// Hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
