//! Seedable randomness: a 32-byte seed expanded by a SHA-256 counter stream.

use rand::rngs::OsRng;
use rand_core::{impls, CryptoRng, Error, RngCore};
use sha2::{Digest, Sha256};

/// Counter-mode hash stream. Block `i` is `SHA256(seed || be64(i))`.
#[derive(Debug, Clone)]
pub struct HashStream {
    seed: [u8; 32],
    counter: u64,
    block: [u8; 32],
    used: usize,
}

impl HashStream {
    pub fn new(seed: [u8; 32]) -> Self {
        HashStream {
            seed,
            counter: 0,
            block: [0; 32],
            used: 32,
        }
    }

    /// Seeded when a seed is given, otherwise seeded from the OS.
    pub fn from_optional_seed(seed: Option<[u8; 32]>) -> Self {
        Self::new(seed.unwrap_or_else(|| {
            let mut s = [0u8; 32];
            OsRng.fill_bytes(&mut s);
            s
        }))
    }

    pub fn from_u64(seed: u64) -> Self {
        let mut s = [0u8; 32];
        s[24..].copy_from_slice(&seed.to_be_bytes());
        Self::new(s)
    }

    pub fn seed(&self) -> [u8; 32] {
        self.seed
    }

    /// Independent child stream `SHA256(seed || label || be64(index))`.
    pub fn derive(&self, label: &str, index: u64) -> HashStream {
        HashStream::new(derive_seed(&self.seed, label, index))
    }

    fn refill(&mut self) {
        let mut h = Sha256::new();
        h.update(self.seed);
        h.update(self.counter.to_be_bytes());
        self.block = h.finalize().into();
        self.counter += 1;
        self.used = 0;
    }
}

pub fn derive_seed(seed: &[u8; 32], label: &str, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed);
    h.update(label.as_bytes());
    h.update(index.to_be_bytes());
    h.finalize().into()
}

impl RngCore for HashStream {
    fn next_u32(&mut self) -> u32 {
        impls::next_u32_via_fill(self)
    }

    fn next_u64(&mut self) -> u64 {
        impls::next_u64_via_fill(self)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        let mut off = 0;
        while off < dest.len() {
            if self.used == 32 {
                self.refill();
            }
            let take = (32 - self.used).min(dest.len() - off);
            dest[off..off + take].copy_from_slice(&self.block[self.used..self.used + take]);
            self.used += take;
            off += take;
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

impl CryptoRng for HashStream {}
