//! Counter-based random streams.
//!
//! A stream is an immutable `(master_seed, stream_id)` descriptor. The value at
//! position `c` is a pure function of `(master_seed, stream_id, c)`, so any
//! replicate or scenery site can be generated in O(1) without shared state, and
//! results never depend on thread scheduling.
//!
//! The mixing function is the SplitMix64 finalizer; a stream walks the
//! SplitMix64 sequence from a per-stream key derived by hashing the descriptor.

use rand::RngCore;
use serde::{Deserialize, Serialize};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const SEED_SALT: u64 = 0x6a09_e667_f3bc_c909;
const CHILD_SALT: u64 = 0xbb67_ae85_84ca_a73b;

/// SplitMix64 output finalizer.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Maps a 64-bit word onto the open interval (0, 1) on a grid of spacing 2^-52.
#[inline(always)]
pub fn open01(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Descriptor of a deterministic random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub const fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Derives a sub-stream, e.g. `stream.child(replicate)` or `stream.child(PURPOSE_TAG)`.
    pub fn child(&self, tag: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id: mix64(self.stream_id ^ mix64(tag.wrapping_add(CHILD_SALT))),
        }
    }

    #[inline]
    fn key(&self) -> u64 {
        mix64(mix64(self.master_seed ^ SEED_SALT) ^ self.stream_id.wrapping_mul(GOLDEN_GAMMA))
    }

    /// The `counter`-th word of the stream.
    #[inline]
    pub fn u64_at(&self, counter: u64) -> u64 {
        self.at_key(self.key(), counter)
    }

    #[inline(always)]
    fn at_key(&self, key: u64, counter: u64) -> u64 {
        mix64(key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    /// The `counter`-th value of the stream as a uniform on (0, 1).
    #[inline]
    pub fn uniform_at(&self, counter: u64) -> f64 {
        open01(self.u64_at(counter))
    }

    /// Sequential cursor over the stream starting at position 0.
    pub fn cursor(&self) -> StreamRng {
        StreamRng {
            key: self.key(),
            counter: 0,
        }
    }

    /// Random-access view with the key precomputed.
    pub fn table(&self) -> StreamTable {
        StreamTable { key: self.key() }
    }
}

/// Random-access view of a stream with its key already derived.
#[derive(Debug, Clone, Copy)]
pub struct StreamTable {
    key: u64,
}

impl StreamTable {
    #[inline(always)]
    pub fn u64_at(&self, counter: u64) -> u64 {
        mix64(self.key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    #[inline(always)]
    pub fn uniform_at(&self, counter: u64) -> f64 {
        open01(self.u64_at(counter))
    }
}

/// Sequential generator over an [`RngStream`]; implements [`RngCore`] so it can
/// drive `rand_distr` samplers.
#[derive(Debug, Clone)]
pub struct StreamRng {
    key: u64,
    counter: u64,
}

impl StreamRng {
    /// Uniform on (0, 1).
    #[inline(always)]
    pub fn open01(&mut self) -> f64 {
        open01(self.next_u64())
    }

    /// Number of words consumed so far.
    pub fn position(&self) -> u64 {
        self.counter
    }
}

impl RngCore for StreamRng {
    #[inline(always)]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline(always)]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Maps a signed site index onto a stream counter (zigzag encoding).
#[inline(always)]
pub fn site_counter(site: i64) -> u64 {
    ((site << 1) ^ (site >> 63)) as u64
}
