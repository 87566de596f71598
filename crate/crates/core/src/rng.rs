//! Seeded, counter-based random streams.
//!
//! A [`Rng`] is a ChaCha8 keystream. Independent pipeline stages draw from
//! streams derived by `(purpose, index)`, so e.g. the patches of iteration
//! 1200 do not depend on how many noise samples were drawn before it.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Purpose tag for a derived stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Patch,
    Mixup,
    Noise,
    Init,
    Sampling,
    Eval,
}

impl Stream {
    fn tag(self) -> u8 {
        match self {
            Stream::Patch => 1,
            Stream::Mixup => 2,
            Stream::Noise => 3,
            Stream::Init => 4,
            Stream::Sampling => 5,
            Stream::Eval => 6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::from_seed(key_for(seed, 0, 0)),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream for `purpose`, numbered by `index`.
    ///
    /// Depends only on the root seed, never on how much of `self` has been
    /// consumed.
    pub fn derive(&self, purpose: Stream, index: u64) -> Rng {
        Rng {
            seed: self.seed,
            inner: ChaCha8Rng::from_seed(key_for(self.seed, purpose.tag(), index)),
        }
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        self.inner.random_range(0..n)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniformly random permutation of `0..n` (Fisher-Yates).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            p.swap(i, j);
        }
        p
    }
}

fn key_for(seed: u64, tag: u8, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"mixsr-rng");
    h.update(seed.to_le_bytes());
    h.update([tag]);
    h.update(index.to_le_bytes());
    h.finalize().into()
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
