//! Deterministic counter-based random streams.
//!
//! Every logical draw is a pure function of `(seed, stream_id, counter)`, so
//! streams can be consumed in any interleaving without affecting each other,
//! and skipping ahead by `k` draws is the same as drawing `k` times and
//! discarding. This is what makes client updates order-independent and whole
//! runs bit-reproducible: there is no shared generator state anywhere.
//!
//! The mixer is a keyed SplitMix64-style avalanche (two multiply/xor-shift
//! rounds per word). That is plenty for Monte-Carlo use at the scales of this
//! crate; it is not a cryptographic generator.

use serde::{Deserialize, Serialize};

use crate::vector::Vector;

/// Role of a stream, part of its address. Distinct purposes never collide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamPurpose {
    /// Per-client stochastic gradient noise.
    Grad,
    /// Momentum direction initialization.
    Init,
    /// Problem generation (matrices, offsets).
    ProblemGen,
    /// Random sample points for assumption validation.
    Validate,
    /// Random-index output draw and other orchestration randomness.
    Output,
    /// Multi-start points for the brute-force inner maximizer.
    InnerMax,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Grad => 1,
            StreamPurpose::Init => 2,
            StreamPurpose::ProblemGen => 3,
            StreamPurpose::Validate => 4,
            StreamPurpose::Output => 5,
            StreamPurpose::InnerMax => 6,
        }
    }
}

/// Stream address: owning client index plus purpose tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub client: u32,
    pub purpose: StreamPurpose,
}

impl StreamId {
    pub fn new(client: u32, purpose: StreamPurpose) -> Self {
        StreamId { client, purpose }
    }
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn avalanche(mut z: u64) -> u64 {
    z ^= z >> 33;
    z = z.wrapping_mul(0xff51_afd7_ed55_8ccd);
    z ^= z >> 33;
    z = z.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    z ^= z >> 33;
    z
}

/// A deterministic stream of random values addressed by counter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngStream {
    seed: u64,
    id: StreamId,
    counter: u64,
    /// Mixed key derived from (seed, id); cached so draws cost two rounds.
    base: u64,
}

impl RngStream {
    pub fn new(seed: u64, id: StreamId) -> Self {
        let base = avalanche(
            avalanche(seed ^ GOLDEN)
                ^ avalanche((id.client as u64).wrapping_mul(GOLDEN) ^ (id.purpose.tag() << 56)),
        );
        RngStream {
            seed,
            id,
            counter: 0,
            base,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Skips `k` logical draws.
    pub fn advance(&mut self, k: u64) {
        self.counter = self.counter.wrapping_add(k);
    }

    /// The word at (base, counter, lane); pure, does not advance the counter.
    #[inline]
    fn word_at(&self, counter: u64, lane: u64) -> u64 {
        avalanche(self.base ^ avalanche(counter.wrapping_mul(GOLDEN) ^ lane))
    }

    /// Next raw 64-bit word; advances the counter by one logical draw.
    pub fn next_u64(&mut self) -> u64 {
        let w = self.word_at(self.counter, 0);
        self.counter = self.counter.wrapping_add(1);
        w
    }

    /// Uniform draw in the half-open interval (0, 1]; one logical draw.
    pub fn next_unit(&mut self) -> f64 {
        let bits = self.next_u64();
        ((bits >> 11) + 1) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform integer in `0..bound`; one logical draw.
    ///
    /// Uses plain reduction; the modulo bias is ~bound/2^64 and irrelevant at
    /// the bounds used here (step counts, client counts).
    pub fn next_index(&mut self, bound: usize) -> usize {
        assert!(bound > 0);
        (self.next_u64() % bound as u64) as usize
    }

    /// Standard normal via Box-Muller; exactly one logical draw per value.
    ///
    /// The two required uniforms come from distinct lanes of the same
    /// counter, so the draw remains a pure function of the address.
    pub fn next_gaussian(&mut self) -> f64 {
        let c = self.counter;
        self.counter = self.counter.wrapping_add(1);
        let u1 = ((self.word_at(c, 1) >> 11) + 1) as f64 * (1.0 / 9007199254740992.0);
        let u2 = ((self.word_at(c, 2) >> 11) + 1) as f64 * (1.0 / 9007199254740992.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Vector of iid standard normals; `dim` logical draws.
    pub fn gaussian_vec(&mut self, dim: usize) -> Vector {
        Vector::from_raw((0..dim).map(|_| self.next_gaussian()).collect())
    }
}

/// Zero-mean Gaussian noise with total energy contract `E||noise||^2 = sigma^2`.
///
/// The per-coordinate standard deviation is `sigma / sqrt(dim)`, so `sigma`
/// bounds the full-vector noise directly. `sigma = 0` returns the zero vector
/// but still advances the stream by `dim` draws, keeping counter layouts
/// identical across noise levels.
pub fn draw_gaussian(stream: &mut RngStream, dim: usize, sigma: f64) -> Vector {
    assert!(dim >= 1, "draw_gaussian needs dim >= 1");
    assert!(sigma >= 0.0, "sigma must be nonnegative");
    if sigma == 0.0 {
        stream.advance(dim as u64);
        return Vector::zeros(dim);
    }
    let per_coord = sigma / (dim as f64).sqrt();
    let mut v = stream.gaussian_vec(dim);
    for x in v.as_mut_slice() {
        *x *= per_coord;
    }
    v
}
