//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream keyed by
//! (experiment seed, purpose, index). Schemes that share a seed therefore see
//! identical vehicles, channels and requests, and results do not depend on the
//! order in which independent tasks execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// What a random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Mobility = 1,
    Shadowing = 2,
    Partition = 3,
    Split = 4,
    Requests = 5,
    ModelInit = 6,
    LocalTraining = 7,
    Completion = 8,
    Placement = 9,
    Drl = 10,
    Corpus = 11,
}

/// Independent stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // 8 bits of purpose, 56 bits of index.
    rng.set_stream(((purpose as u64) << 56) | (index & 0x00ff_ffff_ffff_ffff));
    rng
}

/// Packs a round number and a vehicle id into one stream index.
pub fn round_vehicle_index(round: u32, vehicle: u64) -> u64 {
    ((round as u64) << 32) | (vehicle & 0xffff_ffff)
}
