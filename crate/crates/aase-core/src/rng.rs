//! Seeded random number generation with stable, documented streams.
//!
//! Everything stochastic in this workspace runs off ChaCha8: it is seedable
//! from a single u64, produces identical output on every platform, and has
//! independent substreams, so parallel work can draw from disjoint streams
//! of one master seed without coordination.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A generator on substream `stream` of `master`. Distinct streams of the
/// same master are independent; the same (master, stream) pair always
/// yields the same sequence.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// A derived u64 seed for a labeled unit of work, e.g. one simulated
/// scenario or one occlusion trial. `tag` separates kinds of work,
/// `index` the instances; both are folded into the stream id.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    assert!(tag < 1 << 16, "seed tag out of range");
    assert!(index < 1 << 48, "seed index out of range");
    stream_rng(master, (tag << 48) | index).gen::<u64>()
}

/// Stream tags used by the experiment harness.
pub mod tags {
    /// Scenario simulation seeds.
    pub const SCENARIO: u64 = 1;
    /// Occlusion pattern seeds; index packs (scenario, cell, trial).
    pub const OCCLUSION: u64 = 2;
    /// Model generation seeds for randomized test corpora.
    pub const MODEL: u64 = 3;
}

/// Packs a (scenario, cell, trial) coordinate into one stream index so each
/// occlusion draw in the experiment grid has its own stream.
pub fn pack_cell(scenario: u64, cell: u64, trial: u64) -> u64 {
    assert!(scenario < 1 << 24, "scenario index out of range");
    assert!(cell < 1 << 16, "cell index out of range");
    assert!(trial < 1 << 8, "trial index out of range");
    (scenario << 24) | (cell << 8) | trial
}
