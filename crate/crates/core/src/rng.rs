//! Counter-based random streams.
//!
//! A stream is addressed by `(master_seed, domain, replica, step)`. The ChaCha
//! key is derived from the master seed and domain tag, the replica selects the
//! ChaCha stream id and the step selects a disjoint block of the keystream, so
//! the numbers a replica sees never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Words of keystream reserved for each step.
const WORDS_PER_STEP_LOG2: u32 = 32;

/// Purpose tags, so that different consumers of the same master seed never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Noise = 1,
    Bootstrap = 2,
    QmcShift = 3,
    Test = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub domain: Domain,
    pub replica: u64,
    pub step: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, domain: Domain, replica: u64, step: u64) -> Self {
        Self {
            master_seed,
            domain,
            replica,
            step,
        }
    }

    pub fn noise(master_seed: u64, replica: u64, step: u64) -> Self {
        Self::new(master_seed, Domain::Noise, replica, step)
    }

    pub fn with_step(self, step: u64) -> Self {
        Self { step, ..self }
    }

    /// Materializes the generator positioned at the start of this key's block.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut state = self.master_seed ^ (self.domain as u64).wrapping_mul(0xA076_1D64_78BD_642F);
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.replica);
        rng.set_word_pos((self.step as u128) << WORDS_PER_STEP_LOG2);
        rng
    }
}

pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
