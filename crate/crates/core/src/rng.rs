//! Deterministic seeded random streams.
//!
//! Every estimator in this crate is a pure function of (config, seed). Streams
//! are built on a counter-based generator so that a `(seed, stream_id)` pair
//! yields the same sequence on every platform and thread schedule. Distinct
//! stream ids select distinct ChaCha streams and are independent for all
//! practical purposes, which is what makes chunked parallel execution
//! reproducible irrespective of the worker count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A value-like random stream; cheap to clone and safe to move across threads.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RandomStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream with the same seed but a different sub-stream index.
    pub fn substream(&self, stream_id: u64) -> Self {
        RandomStream::new(self.seed, stream_id)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw strictly inside (0, 1).
    ///
    /// The open interval guarantees that hazard inverses `q(-log u)` stay
    /// finite: the draw is never exactly 0 or 1.
    pub fn uniform01(&mut self) -> f64 {
        // 53 significant bits, offset by half an ulp so 0 is unreachable.
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard exponential draw, `-log U` with `U` in (0, 1).
    pub fn exp1(&mut self) -> f64 {
        -self.uniform01().ln()
    }

    /// Standard normal draw via the inverse-c.d.f. method.
    pub fn std_normal(&mut self) -> f64 {
        crate::special::normal_quantile(self.uniform01())
            .expect("uniform01 is strictly inside (0,1)")
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}
