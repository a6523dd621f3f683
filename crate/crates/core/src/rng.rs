//! Reproducible random substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by
//! `(seed, stream)` and positioned on the ChaCha stream `index`. A sample
//! therefore sees the same numbers whatever thread evaluates it, which is
//! what makes parallel runs bit-identical to serial ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifies the consumer of a substream so that different estimators
/// never share random numbers under the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Birkhoff = 1,
    Stationary = 2,
    BallConditioned = 3,
    ReturnCounts = 4,
    ChenStein = 5,
    ShortReturns = 6,
    Extremes = 7,
    Correlations = 8,
    Surrogate = 9,
    Profile = 10,
    Inclusion = 11,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for sample `index` of `stream` under `seed`.
pub fn substream(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ (stream as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Derive a child seed, used when one estimator drives another.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut state = seed ^ salt.rotate_left(17);
    splitmix64(&mut state)
}
