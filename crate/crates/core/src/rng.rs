//! Named, seedable, splittable random streams.
//!
//! Every consumer of randomness derives its own stream from the run seed by
//! mixing in a label and any number of integer keys, e.g.
//! `Stream::root(seed).named("sampler").keyed(epoch).keyed(center)`.
//! Streams derived with the same path are identical regardless of the order
//! in which other streams were drawn from, which keeps parallel producers
//! bit-reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stream {
    key: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Stream {
    pub fn root(seed: u64) -> Self {
        Stream { key: splitmix(seed ^ 0x5043_4746_4f52_4745) }
    }

    pub fn named(self, label: &str) -> Self {
        // FNV-1a over the label, then mixed into the key.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        Stream { key: splitmix(self.key ^ h) }
    }

    pub fn keyed(self, k: u64) -> Self {
        Stream { key: splitmix(self.key.rotate_left(17) ^ splitmix(k)) }
    }

    pub fn rng(self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}
