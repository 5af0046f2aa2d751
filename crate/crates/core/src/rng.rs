//! Deterministic random substreams.
//!
//! Every random draw in the crate comes from a generator derived from a
//! single master seed, a row (or job) index and a purpose tag. Two streams
//! with different `(index, purpose)` pairs are independent, so sampling and
//! masking can be reproduced separately and rows can be generated in
//! parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Label,
    Sample,
    Mask,
    Utilities,
    Counts,
    Directions,
    Trial,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Label => 0x4c41_4245_4c00_0001,
            Purpose::Sample => 0x5341_4d50_4c45_0002,
            Purpose::Mask => 0x4d41_534b_0000_0003,
            Purpose::Utilities => 0x5554_494c_0000_0004,
            Purpose::Counts => 0x434f_554e_5400_0005,
            Purpose::Directions => 0x4449_5245_4300_0006,
            Purpose::Trial => 0x5452_4941_4c00_0007,
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

/// Mixes `(master, index, purpose)` into a 64-bit child seed.
pub fn derive_seed(master: u64, index: u64, purpose: Purpose) -> u64 {
    let mut state = master;
    let a = splitmix64(&mut state);
    state ^= index.wrapping_mul(0xd6e8_feb8_6659_fd93);
    let b = splitmix64(&mut state);
    state ^= purpose.tag();
    let c = splitmix64(&mut state);
    a ^ b.rotate_left(21) ^ c.rotate_left(42)
}

pub fn substream(master: u64, index: u64, purpose: Purpose) -> StreamRng {
    let mut state = derive_seed(master, index, purpose);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
