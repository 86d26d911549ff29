//! Deterministic splitting of one master seed into independent streams.
//!
//! Each subsystem draws from its own stream so that, for example, switching
//! the mapper never perturbs the generated workload or the PV map.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    ProcessVariation,
    Workload,
    Exploration,
    Baseline,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::ProcessVariation => 0x5056_4752_4944,
            Stream::Workload => 0x574f_524b_4c44,
            Stream::Exploration => 0x4558_504c_4f52,
            Stream::Baseline => 0x4241_5345_4c4e,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_seed(master: u64, stream: Stream) -> u64 {
    mix64(master ^ mix64(stream.tag()))
}

pub fn stream_rng(master: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, stream))
}
