//! Seeded random number generation.
//!
//! Everything stochastic in the crate flows through ChaCha12 streams so a
//! run is reproducible from a single root seed. Substreams (per repeat,
//! per fold, per subsample) are derived by mixing tag words into the seed
//! with splitmix64, which keeps streams independent without coordination.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The crate-wide RNG type.
pub type SeedRng = ChaCha12Rng;

// splitmix64 finalizer; good avalanche, cheap, stable across platforms.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG seeded directly from `seed`. Identical seeds produce identical
/// streams.
pub fn seeded_rng(seed: u64) -> SeedRng {
    SeedRng::seed_from_u64(seed)
}

/// RNG for a derived stream identified by `tags` (repeat index, fold
/// index, ...). Distinct tag vectors give independent streams under the
/// same root seed.
pub fn derived_rng(root_seed: u64, tags: &[u64]) -> SeedRng {
    let mut s = mix(root_seed ^ 0x7265_6763_616c_5f31); // domain constant
    for (i, &t) in tags.iter().enumerate() {
        s = mix(s ^ t.wrapping_add(mix(i as u64 + 1)));
    }
    seeded_rng(s)
}
