//! Deterministic seed derivation.
//!
//! Every pipeline stage draws its randomness from a stream derived from the
//! run's single root seed and a stage label, so reruns with the same
//! configuration reproduce every artifact. Nested work items (a sample
//! inside a stage, a rollout inside a group) derive further seeds from the
//! stage seed plus their indices, which keeps parallel execution
//! deterministic regardless of scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the label bytes. Stable across platforms and releases,
/// unlike `std::hash`.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// splitmix64 finalizer, used to decorrelate nearby seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a stage seed from the root seed and a stage label.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    mix(root ^ fnv1a(label.as_bytes()))
}

/// Derive a per-item seed below a stage seed.
pub fn derive_indexed(stage_seed: u64, index: u64) -> u64 {
    mix(stage_seed ^ mix(index))
}

/// Seeded RNG used throughout the engine.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
