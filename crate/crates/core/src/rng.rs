//! Seeded randomness.
//!
//! All randomness is drawn from ChaCha8, a counter-based generator with a
//! fixed, platform-independent algorithm. Independent consumers of one run
//! seed get distinct ChaCha streams instead of re-deriving seeds by hand.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for `seed`, positioned on the given stream.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for `seed` on stream 0.
pub fn seeded(seed: u64) -> Rng {
    stream(seed, 0)
}

/// Mixes a base seed with a label into a new seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
