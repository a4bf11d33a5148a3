//! Keyed random streams.
//!
//! Every draw the simulator makes comes from a stream addressed by
//! `(root seed, worker, iteration)`. The key is hashed with SplitMix64
//! finalizers into a ChaCha8 seed, so a stream never depends on how many
//! numbers other streams consumed or in which order workers ran.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const WORKER_SALT: u64 = 0xD1B5_4A32_D192_ED03;
const ITER_SALT: u64 = 0x8CB9_2BA7_2F3D_8DD7;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Address of one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub root: u64,
    pub worker: u64,
    pub iteration: u64,
}

impl StreamKey {
    pub fn new(root: u64, worker: usize, iteration: usize) -> Self {
        Self {
            root,
            worker: worker as u64,
            iteration: iteration as u64,
        }
    }

    pub fn seed(&self) -> u64 {
        let h = mix64(self.root);
        let h = mix64(h ^ self.worker.wrapping_mul(WORKER_SALT));
        mix64(h ^ self.iteration.wrapping_mul(ITER_SALT))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed())
    }
}

/// Per-worker sample streams for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleStreams {
    root: u64,
}

impl SampleStreams {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Stream for worker `worker` in round `iteration`.
    pub fn for_round(&self, worker: usize, iteration: usize) -> ChaCha8Rng {
        StreamKey::new(self.root, worker, iteration).rng()
    }

    /// Stream reserved for bookkeeping draws (variance probes and the like)
    /// that must not collide with any worker's round stream.
    pub fn auxiliary(&self, tag: u64) -> ChaCha8Rng {
        StreamKey {
            root: self.root,
            worker: u64::MAX,
            iteration: tag,
        }
        .rng()
    }
}
