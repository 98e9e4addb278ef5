//! Named random substreams derived from the run seed.
//!
//! Each concern (link loss, generator jitter, contention, ...) owns an
//! independent ChaCha stream, so adding draws in one consumer never shifts the
//! values seen by another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Per-transmission data/ACK success draws.
    Link,
    /// Packet generator period jitter.
    Jitter,
    /// Minimal-cell contention and DIO timer jitter.
    Backoff,
    /// 6P candidate cell selection.
    Sixp,
}

impl Stream {
    pub const ALL: [Stream; 4] = [Stream::Link, Stream::Jitter, Stream::Backoff, Stream::Sixp];

    fn tag(self) -> u64 {
        match self {
            Stream::Link => 0x6c69_6e6b,
            Stream::Jitter => 0x6a69_7474,
            Stream::Backoff => 0x6261_636b,
            Stream::Sixp => 0x7369_7870,
        }
    }
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Rngs {
    streams: [ChaCha8Rng; 4],
}

impl Rngs {
    pub fn new(seed: u64) -> Self {
        Rngs {
            streams: Stream::ALL.map(|s| ChaCha8Rng::seed_from_u64(mix(seed ^ mix(s.tag())))),
        }
    }

    pub fn stream(&mut self, s: Stream) -> &mut ChaCha8Rng {
        let i = Stream::ALL.iter().position(|x| *x == s).expect("stream listed in ALL");
        &mut self.streams[i]
    }

    /// Uniform value in `[0, 1)` from substream `s`.
    pub fn next_random(&mut self, s: Stream) -> f64 {
        self.stream(s).gen::<f64>()
    }

    pub fn bernoulli(&mut self, s: Stream, p: f64) -> bool {
        if p >= 1.0 {
            return true;
        }
        if p <= 0.0 {
            return false;
        }
        self.next_random(s) < p
    }

    /// Uniform index in `0..n`.
    pub fn pick(&mut self, s: Stream, n: usize) -> usize {
        self.stream(s).gen_range(0..n)
    }
}
