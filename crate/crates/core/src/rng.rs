//! Seedable, splittable randomness.
//!
//! A stream forks children from its *seed*, not from its current state, so a
//! child labelled `"node-3"` is the same no matter how much the parent has
//! already been consumed. This is what lets the harness replay runs.

use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: [u8; 32],
    rng: ChaCha20Rng,
}

impl RandomStream {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self {
            seed,
            rng: ChaCha20Rng::from_seed(seed),
        }
    }

    pub fn from_u64(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"trustworthy/stream");
        h.update(seed.to_le_bytes());
        Self::from_seed(h.finalize().into())
    }

    /// Seeds from the operating system; only for production entry points.
    pub fn from_entropy() -> Self {
        let mut seed = [0u8; 32];
        rand::rngs::OsRng.fill_bytes(&mut seed);
        Self::from_seed(seed)
    }

    pub fn fork(&self, label: &str) -> Self {
        let mut h = Sha256::new();
        h.update(self.seed);
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        Self::from_seed(h.finalize().into())
    }

    pub fn seed(&self) -> [u8; 32] {
        self.seed
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

impl CryptoRng for RandomStream {}
