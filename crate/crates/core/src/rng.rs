//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha20 stream derived
//! from the user seed; bank sampling never shares state with order shuffling. The same `(seed, Stream)`
//! pair yields the same sequence on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Independent stream identifiers. The numeric values are part of the
/// reproducibility contract and must not be renumbered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Frequency vectors of a [`crate::rff::RandomFeatureBank`].
    Bank = 1,
    /// Sampled/tested partition.
    Split = 2,
    /// Node visiting order during training.
    Order = 3,
    /// Synthetic dataset generation.
    Data = 4,
    /// Free stream for tests and ad-hoc experiments.
    Aux = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draw(seed: u64, stream: Stream) -> Vec<u64> {
        let mut rng = stream_rng(seed, stream);
        (0..4).map(|_| rng.random()).collect()
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        assert_eq!(draw(7, Stream::Bank), draw(7, Stream::Bank));
        assert_ne!(draw(7, Stream::Bank), draw(7, Stream::Order));
        assert_ne!(draw(7, Stream::Bank), draw(8, Stream::Bank));
    }
}
