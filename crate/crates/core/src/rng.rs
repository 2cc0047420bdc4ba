//! Named, independent random streams derived from a single master seed.
//!
//! Every pipeline stage draws from its own ChaCha stream, selected by hashing
//! the stage name into the generator's 64-bit stream id. Changing how much
//! randomness one stage consumes never shifts the values seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StageRng = ChaCha8Rng;

/// FNV-1a over the stage label.
fn stream_id(label: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Returns the generator for `label` under `seed`.
pub fn stream(seed: u64, label: &str) -> StageRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(label));
    rng
}

/// Derives a child seed, for stages that hand a plain `u64` to a callee.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    use rand::Rng;
    stream(seed, label).random()
}
