use rand::{Error as RandError, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const RNG_ALGORITHM: &str = "chacha8";

/// Serializable position of an [`RngStream`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub algorithm: &'static str,
    /// Number of 32-bit words consumed so far.
    pub word_pos: u128,
}

/// Seeded, platform-independent random stream that can be saved and resumed exactly.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn draws(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn state(&self) -> RngState {
        RngState { seed: self.seed, algorithm: RNG_ALGORITHM, word_pos: self.inner.get_word_pos() }
    }

    pub fn from_state(seed: u64, word_pos: u128) -> Self {
        let mut s = Self::new(seed);
        s.inner.set_word_pos(word_pos);
        s
    }

    /// Independent child stream; consumes one draw from this one.
    pub fn fork(&mut self) -> RngStream {
        RngStream::new(self.inner.next_u64())
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.inner.try_fill_bytes(dest)
    }
}
