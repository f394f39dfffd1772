//! Seed expansion. Every consumer of randomness gets its own ChaCha8 stream
//! of the root seed, so phases can be rerun or skipped without shifting the
//! draws of the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids of the pipeline phases.
pub mod phase {
    pub const DATA_X: u64 = 1;
    pub const DATA_Y: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const AE: u64 = 4;
    pub const TRANSLATOR: u64 = 5;
    pub const UPSAMPLER: u64 = 6;
    pub const CLASSIFIER: u64 = 7;
    pub const ENCODER_PLANS: u64 = 8;
}

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// A 64-bit seed for a sub-task, e.g. per-file sampling: word `index` of
/// stream `id`.
pub fn derive(seed: u64, id: u64, index: u64) -> u64 {
    let mut rng = stream(seed, id);
    rng.set_word_pos(2 * index as u128);
    rand::RngCore::next_u64(&mut rng)
}
