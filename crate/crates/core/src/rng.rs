//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the experiment seed. The
//! 64-bit stream id packs the stream kind into the top 8 bits and a
//! per-kind index (slot number, instance number) into the rest, so streams
//! never overlap and can be regenerated independently in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Positions, associations and shadowing.
    Topology,
    /// Small-scale fading, indexed by slot.
    Fading,
    /// Randomized tie-breaking inside schedulers.
    Scheduler,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Topology => 1,
            Stream::Fading => 2,
            Stream::Scheduler => 3,
        }
    }
}

pub fn stream(seed: u64, kind: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((kind.tag() << 56) | (index & ((1 << 56) - 1)));
    rng
}
