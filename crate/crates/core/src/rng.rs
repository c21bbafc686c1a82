//! Deterministic generator derivation.
//!
//! Every randomized routine takes an explicit generator. Independent work items
//! (runs of a batch, paths of a Monte Carlo check) get their own ChaCha stream keyed
//! by `(seed, index)`, so results do not depend on scheduling or worker count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SlipsRng = ChaCha8Rng;

/// Generator for work item `index` under master `seed`.
pub fn stream_rng(seed: u64, index: u64) -> SlipsRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Generator seeded from `seed` alone (stream 0).
pub fn seeded(seed: u64) -> SlipsRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for a named sub-computation of a run with master `seed` (FNV-1a of the label,
/// mixed into the seed). Lets each output of a command draw from its own generator.
pub fn labelled_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seeded(seed ^ h).next_u64()
}

/// Derives a child seed from a generator, for handing to a sub-computation
/// that fans out into streams of its own.
pub fn child_seed<R: rand::Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.next_u64()
}
