//! Seeded random streams.
//!
//! Every trial owns a 64-bit seed. Independent purposes inside the trial
//! (scenario layout, NLoS draws, codebooks, receiver noise, ...) read from
//! separate ChaCha8 streams keyed by the same seed, so changing how much
//! randomness one purpose consumes never shifts another.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type TrialRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Scenario = 1,
    Nlos = 2,
    Codebook = 3,
    Noise = 4,
    Baseline = 5,
    Clustering = 6,
    Analysis = 7,
}

pub fn stream(seed: u64, purpose: Stream) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// Circularly-symmetric complex Gaussian with `E|z|² = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}
