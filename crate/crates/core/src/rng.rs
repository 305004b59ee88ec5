//! Seeded random-number streams.
//!
//! A single master seed fans out into independent sub-streams, one per
//! (domain, index) pair, via the ChaCha stream parameter. Parallel Monte
//! Carlo trials each take their own sub-stream, so results do not depend on
//! scheduling order and rerunning with the same seed is bit-identical.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// What a sub-stream is used for. Each variant gets a disjoint stream range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    /// Per-trial channel/noise draws in Monte Carlo simulation.
    Trial,
    /// Neural-network parameter initialization.
    ModelInit,
    /// Per-sample training data (channels, CSI errors, payload bits).
    TrainSample,
    /// Per-batch training noise.
    TrainNoise,
    /// Per-batch evaluation draws.
    EvalBatch,
    /// Anything else (single-use streams).
    Misc,
}

impl StreamKind {
    fn tag(self) -> u64 {
        match self {
            StreamKind::Trial => 1,
            StreamKind::ModelInit => 2,
            StreamKind::TrainSample => 3,
            StreamKind::TrainNoise => 4,
            StreamKind::EvalBatch => 5,
            StreamKind::Misc => 6,
        }
    }
}

/// Deterministic sub-stream for `(master_seed, kind, index)`.
///
/// Streams with different kinds or indices never overlap: the kind tag picks
/// one of 2^16 stream banks and the index selects within the bank.
pub fn substream(master_seed: u64, kind: StreamKind, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream((kind.tag() << 48) ^ index);
    rng
}

/// Standard normal draw.
pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Circularly symmetric complex Gaussian with E|z|^2 = 1.
pub fn complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(normal(rng), normal(rng)) * std::f64::consts::FRAC_1_SQRT_2
}
