//! Deterministic random-stream derivation.
//!
//! Every stochastic decision in an experiment draws from a ChaCha stream
//! derived from the master seed plus a tag path (purpose, generation,
//! offspring index). Streams are fixed up front, so evaluating individuals
//! in parallel cannot perturb results: the same seed always produces the
//! same experiment, byte for byte.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// SplitMix64 finalizer. Good avalanche, cheap, stable across platforms.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a tag path into the master seed. Order matters: `[a, b]` and
/// `[b, a]` yield unrelated seeds.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(master);
    for &t in tags {
        s = splitmix64(s ^ splitmix64(t));
    }
    s
}

/// A fresh counter-based stream for the given tag path.
pub fn stream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
