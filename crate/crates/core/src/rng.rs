//! Seed handling: counter-based fan-out so parallel jobs get independent,
//! order-insensitive streams, plus a stable non-cryptographic byte hash.

use rand_chacha::ChaCha8Rng;

/// Derive an independent child seed from a master seed and a job index.
///
/// SplitMix64 finalization over the (seed, index) pair; children are
/// decorrelated regardless of evaluation order, so ensembles can run
/// members concurrently and still reproduce bit-identically.
pub fn fan_out(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Named sub-streams within one job, so adding a consumer never shifts the
/// draws of another.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    InitialState,
    Simulate,
    Topology,
    TrainNoise,
    Predict,
    Hpo,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::InitialState => 1,
            Stream::Simulate => 2,
            Stream::Topology => 3,
            Stream::TrainNoise => 4,
            Stream::Predict => 5,
            Stream::Hpo => 6,
        }
    }
}

/// Seed for a named sub-stream of a job seed.
pub fn stream_seed(job_seed: u64, stream: Stream) -> u64 {
    fan_out(job_seed, 0xD1F7_0000 ^ stream.tag())
}

/// Deterministic RNG for a named sub-stream.
pub fn stream_rng(job_seed: u64, stream: Stream) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(stream_seed(job_seed, stream))
}

/// FNV-1a over bytes. Stable across platforms and rust versions; used for
/// config and manifest fingerprints, not for anything adversarial.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}
