//! Seed derivation for the crate's RNG streams.
//!
//! A run owns one master seed; every consumer (environment episodes, weight
//! init, per-agent exploration noise, replay sampling, ...) gets its own
//! stream id so adding a consumer never shifts the draws of another.

use rand_chacha::ChaCha12Rng;
use rand_chacha::rand_core::SeedableRng;

/// Mixes a master seed and a stream id into an independent sub-seed
/// (splitmix64 finalizer).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for a derived stream.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, stream))
}

/// Stream ids used across the crate. Grouped here so collisions are visible.
pub mod streams {
    /// Environment episode `e` during training.
    pub const TRAIN_EPISODE: u64 = 0x1000;
    /// Environment episode `e` during evaluation.
    pub const EVAL_EPISODE: u64 = 0x2000;
    /// Network/head weight initialization.
    pub const INIT: u64 = 0x3000;
    /// Per-agent action noise, offset by agent index.
    pub const ACTION_NOISE: u64 = 0x4000;
    /// Per-agent replay sampling, offset by agent index.
    pub const REPLAY: u64 = 0x5000;
    /// Per-agent fresh-action draws inside updates, offset by agent index.
    pub const UPDATE_NOISE: u64 = 0x6000;
    /// Random-allocation baseline.
    pub const RANDOM_POLICY: u64 = 0x7000;
    /// Per-user exploration draws of the value-grid learner.
    pub const GREEDY_EXPLORE: u64 = 0x8000;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_streams_give_distinct_seeds() {
        let a = derive_seed(7, streams::TRAIN_EPISODE);
        let b = derive_seed(7, streams::TRAIN_EPISODE + 1);
        let c = derive_seed(8, streams::TRAIN_EPISODE);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn derivation_is_stable() {
        // Frozen so a refactor that silently reseeds every stream shows up.
        assert_eq!(derive_seed(0, 0), 0);
        assert_eq!(derive_seed(7, 0x1000), derive_seed(7, 0x1000));
        let mut rng_a = stream_rng(42, 1);
        let mut rng_b = stream_rng(42, 1);
        use rand::Rng;
        assert_eq!(rng_a.random::<u64>(), rng_b.random::<u64>());
    }
}
