//! Named, splittable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by `(root seed, name)` with the
//! stream index selecting ChaCha's 64-bit stream id, so streams for different
//! purposes (weight init, dropout, shuffling, per-snapshot noise) never share
//! state and can be created in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStreams {
    seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, name: &str, index: u64) -> ChaCha8Rng {
        let mut state = self.seed ^ fnv1a(name.as_bytes());
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }

    /// Child seed for a nested component, derived deterministically.
    pub fn derive(&self, name: &str) -> RngStreams {
        let mut state = self.seed ^ fnv1a(name.as_bytes()).rotate_left(17);
        RngStreams::new(splitmix64(&mut state))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
