//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by a root
//! seed, a textual label and an index. Labels separate independent consumers
//! (fitting, simulation, ruin, ...) so adding a consumer never shifts the draws
//! of another; the index selects the per-trajectory or per-resample stream, so
//! results do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// A root seed plus a label path; cheap to copy and extend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedKey(u64);

impl SeedKey {
    pub fn new(seed: u64) -> Self {
        SeedKey(splitmix64(seed))
    }

    /// Derive a child key for a named sub-stream.
    pub fn child(self, label: &str) -> Self {
        SeedKey(splitmix64(self.0 ^ fnv1a(label.as_bytes())))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// The `index`-th independent stream under this key.
    pub fn stream(self, index: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(index);
        rng
    }
}

impl From<u64> for SeedKey {
    fn from(seed: u64) -> Self {
        SeedKey::new(seed)
    }
}
