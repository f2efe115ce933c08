//! Deterministic random streams.
//!
//! Every replicate draws from its own ChaCha8 stream selected with
//! `set_stream`, so results are reproducible regardless of how replicates
//! are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par::Execution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self { master_seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// SplitMix64 finaliser, used to derive decorrelated master seeds for
/// distinct experiments sharing one user seed.
pub fn mix_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Replicate count, seed and execution policy of a Monte Carlo experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MonteCarlo {
    pub replicates: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl MonteCarlo {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self { replicates, seed, exec: Execution::default() }
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    /// Same settings, independent streams.
    pub fn relabel(&self, label: u64) -> Self {
        Self { seed: mix_seed(self.seed, label), ..*self }
    }

    pub fn with_replicates(mut self, replicates: usize) -> Self {
        self.replicates = replicates;
        self
    }

    pub fn spec(&self, replicate: usize) -> RngSpec {
        RngSpec::new(self.seed, replicate as u64)
    }

    /// Runs `f(replicate, spec)` for every replicate, results in replicate order.
    pub fn run<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, RngSpec) -> T + Sync + Send,
    {
        let seed = self.seed;
        self.exec.map_indexed(self.replicates, move |r| f(r, RngSpec::new(seed, r as u64)))
    }
}
