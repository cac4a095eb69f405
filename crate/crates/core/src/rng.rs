//! Seed derivation. A master seed selects a ChaCha8 key; the replication index
//! and a purpose tag select one of its 2^64 independent streams, so every
//! replication draws from its own stream regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TessRng = ChaCha8Rng;

/// Purpose tags occupy the top 16 bits of the stream id.
pub mod purpose {
    pub const SAMPLE: u16 = 0;
    pub const ESTIMATOR: u16 = 1;
    pub const ORACLE: u16 = 2;
    pub const SIGMA2_SINGLE: u16 = 3;
    pub const SIGMA2_PAIR: u16 = 4;
    pub const TAIL: u16 = 5;
    pub const BOOTSTRAP: u16 = 6;
    pub const STABILIZATION: u16 = 7;
    pub const PILOT: u16 = 8;
}

pub fn stream(master_seed: u64, purpose: u16, index: u64) -> TessRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((purpose as u64) << 48) ^ (index & 0x0000_ffff_ffff_ffff));
    rng
}

/// Generator for a single seeded call that is not part of a replication set.
pub fn seeded(seed: u64) -> TessRng {
    stream(seed, purpose::SAMPLE, 0)
}
