//! Named, hierarchically derived random streams.
//!
//! A single root seed fans out into independent streams keyed by a label and
//! an index (`values/3`, `replication/7`, ...). Draws made on one branch never
//! shift the draws of another, so turning a feature on or off leaves every
//! other stream untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedStream {
    key: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

impl SeedStream {
    pub fn root(seed: u64) -> Self {
        let mut state = seed;
        SeedStream {
            key: [splitmix64(&mut state), splitmix64(&mut state), splitmix64(&mut state), splitmix64(&mut state)],
        }
    }

    /// Derives the child stream `label/index`.
    pub fn derive(&self, label: &str, index: u64) -> Self {
        let tag = fnv1a(label.as_bytes());
        let mut key = [0u64; 4];
        for (slot, word) in key.iter_mut().zip(self.key) {
            let mut state = word ^ tag.rotate_left(17) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93);
            *slot = splitmix64(&mut state) ^ splitmix64(&mut state);
        }
        SeedStream { key }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        for (chunk, word) in seed.chunks_exact_mut(8).zip(self.key) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}
