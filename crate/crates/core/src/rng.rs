//! Reproducible random streams keyed by (seed, trial, split).
//!
//! Each main trial and each retrial launched inside it draws from its own
//! ChaCha stream, so results do not depend on how trials are scheduled
//! across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Salt separating pilot-run streams from estimation streams.
pub const PILOT_SALT: u64 = 0x5049_4c4f_545f_5255;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for retrial `split` of main trial `trial` (split 0 is the main path).
pub fn stream(seed: u64, trial: u64, split: u64) -> StreamRng {
    let mut state = seed;
    let a = splitmix64(&mut state);
    let mut state = a ^ split.wrapping_mul(0xd134_2543_de82_ef95);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(trial);
    rng
}
