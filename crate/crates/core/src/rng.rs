//! Counter-based random sub-streams.
//!
//! Every random draw in a Monte Carlo run is taken from a ChaCha stream keyed
//! by `(master seed, trial, lane)`. Trials can therefore be evaluated in any
//! order, on any number of threads, and still produce identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Lane reserved for topology (distance) draws.
pub const TOPOLOGY_LANE: u64 = u64::MAX;

/// Master seed from which per-(trial, lane) generators are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    master: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Generator for one `(trial, lane)` pair. Lanes `0..K` are the users;
    /// [`TOPOLOGY_LANE`] is used for distances.
    pub fn rng(&self, trial: u64, lane: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut state = self.master;
        let words = [
            splitmix64(&mut state),
            splitmix64(&mut state) ^ trial,
            splitmix64(&mut state) ^ lane,
            splitmix64(&mut state),
        ];
        // A second mixing pass so that nearby (trial, lane) pairs diverge.
        let mut mixed = words[1].rotate_left(17) ^ words[2];
        for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
            let v = splitmix64(&mut mixed) ^ w;
            chunk.copy_from_slice(&v.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
