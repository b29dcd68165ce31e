//! Seed derivation for independent random streams.
//!
//! Every episode uses one stream for the environment and one per player,
//! all derived from a single master seed. Streams are keyed by a role
//! string and an index, so adding a player (or a run) never perturbs the
//! draws of any other stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; the standard 64-bit avalanche mix.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a stream seed as `hash(master, role, index)`.
///
/// The role string is folded into the state byte by byte before the index,
/// so `("player", 1)` and `("env", 1)` share nothing.
pub fn derive_seed(master: u64, role: &str, index: u64) -> u64 {
    let mut h = mix64(master);
    for &b in role.as_bytes() {
        h = mix64(h ^ u64::from(b));
    }
    mix64(h ^ index)
}

/// A named random stream derived from the master seed.
pub fn stream(master: u64, role: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, role, index))
}
