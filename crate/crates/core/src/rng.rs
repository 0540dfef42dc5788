//! Deterministic random-number contract.
//!
//! Every run is driven by one root seed. Each consumer draws from its own
//! named substream, so changing how many numbers one component consumes
//! never shifts the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Substream {
    Strategies,
    Mu,
    Choice,
    Wiener,
    Terminal,
    Bootstrap,
    Fixture,
}

impl Substream {
    fn tag(self) -> u64 {
        match self {
            Substream::Strategies => 0x5354_5241_5445_4759,
            Substream::Mu => 0x4d55_5f53_4551_5545,
            Substream::Choice => 0x4348_4f49_4345_5f4e,
            Substream::Wiener => 0x5749_454e_4552_5f44,
            Substream::Terminal => 0x5445_524d_494e_414c,
            Substream::Bootstrap => 0x424f_4f54_5354_5250,
            Substream::Fixture => 0x4649_5854_5552_4553,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for substream `stream`, replica `index`, of the run rooted at `root`.
pub fn derive_seed(root: u64, stream: Substream, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ stream.tag()).wrapping_add(splitmix64(index)))
}

/// Root seed of the `k`-th independent game realization under `root`.
pub fn replica_seed(root: u64, k: u64) -> u64 {
    splitmix64(root.wrapping_mul(0x2545_f491_4f6c_dd1d) ^ splitmix64(k.wrapping_add(1)))
}

pub fn substream(root: u64, stream: Substream, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(root, stream, index))
}

/// Generators consumed by one discrete game run.
#[derive(Debug, Clone)]
pub struct GameStreams {
    pub mu: StreamRng,
    pub choice: StreamRng,
}

impl GameStreams {
    pub fn new(root: u64, replica: u64) -> Self {
        Self {
            mu: substream(root, Substream::Mu, replica),
            choice: substream(root, Substream::Choice, replica),
        }
    }
}
