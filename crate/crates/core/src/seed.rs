//! Stable seed derivation.
//!
//! Every random draw in a run descends from one base seed through
//! [`derive`], a SplitMix64 fold over `(parent, index, purpose)`. The mapping
//! is fixed; changing it changes every golden output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Purpose tags keep independent streams from colliding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Replication = 1,
    Stream = 2,
    ItemJitter = 3,
    ItemCorruption = 4,
    ItemClass = 5,
    Selector = 6,
    FineTune = 7,
    CleanReserve = 8,
    Exemplars = 9,
    Dataset = 10,
    Init = 11,
    Shuffle = 12,
    ShiftMask = 13,
}

pub fn derive(parent: u64, index: u64, purpose: Purpose) -> u64 {
    let a = splitmix64(parent ^ (purpose as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    splitmix64(a ^ splitmix64(index))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
