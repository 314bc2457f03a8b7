//! Sub-seed derivation.
//!
//! Every generated item owns a ChaCha stream seeded from
//! `sub_seed(master, index)`, so item `i` is the same no matter which worker
//! produces it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Domain tags keep streams for different purposes independent.
pub mod domain {
    pub const EXAMPLE: u64 = 0x6578_616d_706c_6573;
    pub const SHUFFLE: u64 = 0x7368_7566_666c_6573;
    pub const CORRUPTION: u64 = 0x636f_7272_7570_7473;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed, a domain tag and an item index into a sub-seed.
pub fn sub_seed(master: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(domain)) ^ index)
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}
