//! Keyed, reproducible random streams.
//!
//! Every consumer of randomness derives its generator from a [`StreamKey`]
//! plus a 64-bit lane (usually a packed `(row, col)` pair). Streams are
//! ChaCha8 counter-based generators, so a given key always yields the same
//! sequence no matter which thread or in which order it is requested.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator type used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// What a stream is used for. Distinct domains never share a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Signal,
    Targets,
    Programming,
    Noise,
    Probe,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Signal => 0x5349_474e,
            Domain::Targets => 0x5441_5247,
            Domain::Programming => 0x5052_4f47,
            Domain::Noise => 0x4e4f_4953,
            Domain::Probe => 0x5052_4f42,
        }
    }
}

/// Identifies a family of streams: `(master_seed, domain, trial, epoch)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub domain: Domain,
    pub trial: u64,
    pub epoch: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, domain: Domain, trial: u64) -> Self {
        Self {
            master_seed,
            domain,
            trial,
            epoch: 0,
        }
    }

    pub fn with_epoch(self, epoch: u64) -> Self {
        Self { epoch, ..self }
    }

    /// Generator for one lane of this key.
    pub fn rng(&self, lane: u64) -> SimRng {
        let mut state = self.master_seed ^ self.domain.tag().rotate_left(17);
        let mut seed = [0u8; 32];
        let words = [
            splitmix64(&mut state),
            splitmix64(&mut state) ^ self.trial,
            splitmix64(&mut state) ^ self.epoch.rotate_left(29),
            splitmix64(&mut state),
        ];
        for (chunk, word) in seed.chunks_exact_mut(8).zip(words) {
            let mut s = word;
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(lane);
        rng
    }

    /// Generator for the cell at `(row, col)`.
    pub fn cell_rng(&self, row: usize, col: usize) -> SimRng {
        self.rng(cell_lane(row, col))
    }
}

pub fn cell_lane(row: usize, col: usize) -> u64 {
    ((row as u64) << 32) | (col as u64 & 0xffff_ffff)
}

/// A generator seeded directly from a single integer, for tests and tools.
pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
