//! Seed derivation and RNG construction.
//!
//! Every stochastic stage derives its own stream from one master seed, so
//! results never depend on scheduling or on how many other streams were
//! consumed first. Streams are namespaced: `stream = (ns << 32) | index`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Namespace for per-tree bootstrap and split streams.
pub const NS_TREE: u64 = 1;
/// Namespace for dataset splits (train/test shuffles).
pub const NS_SPLIT: u64 = 2;
/// Namespace for per-patient synthesis streams.
pub const NS_PATIENT: u64 = 3;
/// Namespace for t-SNE initialization.
pub const NS_EMBED: u64 = 4;

/// Sub-streams within one synthetic patient.
pub const SUB_ECG: u64 = 0;
pub const SUB_EEG: u64 = 1;
pub const SUB_ABP: u64 = 2;
pub const SUB_NIRS: u64 = 3;
pub const SUB_SPO2: u64 = 4;
pub const SUB_DEMOG: u64 = 5;

/// Mixes a master seed with a stream id into an independent 64-bit seed.
///
/// SplitMix64 finalizer applied to the sum; a single-bit change in either
/// input flips about half the output bits.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Composes a namespaced stream id from a namespace and an index.
pub fn stream_id(ns: u64, index: u64) -> u64 {
    (ns << 32) | (index & 0xffff_ffff)
}

/// ChaCha8 generator seeded from a derived seed.
pub fn seeded_rng(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}
