//! Counter-based random substreams.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed with the
//! stream id as its 64-bit stream selector. Gate chunk `c` draws from stream
//! `c`; the sequential afterpulse pass draws from [`AFTERPULSE_STREAM`]; sweep
//! point `p` of a higher-level driver re-keys with [`derive_seed`]. Results
//! therefore depend only on the master seed and the chunk layout, never on
//! how chunks are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const AFTERPULSE_STREAM: u64 = u64::MAX;

pub fn stream(master_seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(id);
    rng
}

/// Mixes a label into a master seed (SplitMix64 finalizer), for deriving
/// independent sub-seeds per sweep point or segment.
pub fn derive_seed(master_seed: u64, label: u64) -> u64 {
    let mut z = master_seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
