//! Counter-addressed random streams.
//!
//! Every random draw in the toolkit is taken from a [`RandomStream`] that is
//! derived from a run seed plus a [`Lane`] of `(epoch, sample_index, op_id)`
//! counters. Two streams with the same seed and lane yield the same sequence
//! no matter which thread creates them or in what order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Operation identifiers used when addressing lanes.
pub mod ops {
    pub const VIEW_A: u64 = 0;
    pub const VIEW_B: u64 = 1;
    pub const CROP: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const INIT: u64 = 5;
    pub const MASK: u64 = 6;
    pub const PREVIEW: u64 = 7;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Lane {
    pub epoch: u64,
    pub sample_index: u64,
    pub op_id: u64,
}

impl Lane {
    pub const fn new(epoch: u64, sample_index: u64, op_id: u64) -> Self {
        Lane { epoch, sample_index, op_id }
    }
}

#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    lane: Lane,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64, lane: Lane) -> Self {
        let mut key = [0u8; 32];
        let words = [
            splitmix64(seed),
            splitmix64(seed ^ splitmix64(lane.epoch.wrapping_add(1))),
            splitmix64(seed.rotate_left(17) ^ splitmix64(lane.sample_index.wrapping_add(2))),
            splitmix64(seed.rotate_left(41) ^ splitmix64(lane.op_id.wrapping_add(3))),
        ];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        RandomStream { seed, lane, rng: ChaCha8Rng::from_seed(key) }
    }

    /// Convenience constructor for a lane.
    pub fn lane(seed: u64, epoch: u64, sample_index: u64, op_id: u64) -> Self {
        Self::new(seed, Lane::new(epoch, sample_index, op_id))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn current_lane(&self) -> Lane {
        self.lane
    }

    /// A fresh stream whose lane is derived from this one; does not advance `self`.
    pub fn fork(&self, op_id: u64) -> Self {
        Self::new(
            splitmix64(self.seed ^ splitmix64(self.lane.op_id.wrapping_add(0x51))),
            Lane::new(self.lane.epoch, self.lane.sample_index, op_id),
        )
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
