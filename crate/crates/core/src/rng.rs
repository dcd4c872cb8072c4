//! Counter-based random streams.
//!
//! Every random quantity in the engine is drawn from a ChaCha stream keyed by
//! `(seed, purpose tag)` and positioned at the stream id of the path it
//! belongs to. A path's draws therefore never depend on how many other paths
//! exist or on which worker thread produced them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct tags give statistically independent
/// streams for the same seed and path index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamTag {
    Brownian,
    DefaultThreshold,
    Mark,
    NestedInner,
    Axioms,
    TreeMeasure,
    Custom(u64),
}

impl StreamTag {
    fn code(self) -> u64 {
        match self {
            StreamTag::Brownian => 0x42_52_4f_57,
            StreamTag::DefaultThreshold => 0x45_54_41_5f,
            StreamTag::Mark => 0x4d_41_52_4b,
            StreamTag::NestedInner => 0x4e_45_53_54,
            StreamTag::Axioms => 0x41_58_49_4f,
            StreamTag::TreeMeasure => 0x54_52_45_45,
            StreamTag::Custom(c) => c.rotate_left(17) ^ 0x9e37_79b9_7f4a_7c15,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Returns the stream for `(seed, tag, index)`.
pub fn substream(seed: u64, tag: StreamTag, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ tag.code().wrapping_mul(0xd6e8_feb8_6659_fd93);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
