//! Seeded random streams.
//!
//! Every stochastic draw in a run comes from a stream forked off the run's root
//! seed by a `(domain, a, b)` label, so a draw never depends on how many other
//! draws happened before it. This is what lets the centralized authority and the
//! on-chain contract see the same demands for the same DER and round.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Random stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Forks a stream from `root` for the given label.
pub fn fork(root: u64, domain: &str, a: u64, b: u64) -> Stream {
    let mut h = Sha256::new();
    h.update(b"fairgrid/stream/v1");
    h.update(root.to_le_bytes());
    h.update((domain.len() as u64).to_le_bytes());
    h.update(domain.as_bytes());
    h.update(a.to_le_bytes());
    h.update(b.to_le_bytes());
    let seed: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(seed)
}
