//! Seeded randomness and the exact sampling primitives used by every engine.
//!
//! Streams are ChaCha8 keyed by `seed` with `stream_id` selecting the ChaCha
//! stream, so replicas are independent and reproducible without shared state.
//! Gaussians come from the ziggurat sampler of `rand_distr::StandardNormal`
//! and exponentials from `rand_distr::Exp1`; both are pinned through
//! `Cargo.lock` so a seed maps to the same sequence on every platform.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{arg, Result};

/// A single-owner random stream identified by `(seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
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

    /// Number of 32-bit words consumed so far.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// A new stream sharing the seed with a different stream id.
    pub fn substream(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    /// Standard normal draw.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Exponential(1) draw.
    #[inline]
    pub fn exp1(&mut self) -> f64 {
        self.rng.sample(Exp1)
    }

    /// Uniform draw on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    #[inline]
    pub fn coin(&mut self) -> bool {
        self.rng.next_u32() & 1 == 1
    }
}

/// `d` independent `N(0, variance)` samples.
pub fn gauss_vec(stream: &mut RngStream, d: usize, variance: f64) -> Result<Vec<f64>> {
    if d == 0 {
        return arg("dimension must be at least 1");
    }
    if !(variance >= 0.0) {
        return arg(format!("variance must be nonnegative, got {variance}"));
    }
    let sd = variance.sqrt();
    Ok((0..d).map(|_| sd * stream.normal()).collect())
}

/// Exponential inter-event gap with the given rate.
pub fn exp_gap(stream: &mut RngStream, rate: f64) -> Result<f64> {
    if !(rate > 0.0) || !rate.is_finite() {
        return arg(format!("rate must be positive and finite, got {rate}"));
    }
    Ok(positive_exp(stream) / rate)
}

/// Exp(1) sample conditioned away from the measure-zero value 0.
#[inline]
pub(crate) fn positive_exp(stream: &mut RngStream) -> f64 {
    loop {
        let e = stream.exp1();
        if e > 0.0 {
            return e;
        }
    }
}

/// `P(Z >= a)` for a standard normal `Z`.
pub fn normal_upper_tail(a: f64) -> f64 {
    0.5 * libm::erfc(a / std::f64::consts::SQRT_2)
}

/// Probability that a Brownian bridge from `x0` to `x1` over `delta` touches
/// the line running from `a0` to `a1`, with the path starting below the line.
pub fn bridge_cross_prob(x0: f64, x1: f64, delta: f64, a0: f64, a1: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return arg(format!("bridge duration must be positive, got {delta}"));
    }
    Ok(line_cross_prob(x0, x1, delta, a0, a1))
}

#[inline]
pub(crate) fn line_cross_prob(x0: f64, x1: f64, delta: f64, a0: f64, a1: f64) -> f64 {
    let g0 = a0 - x0;
    let g1 = a1 - x1;
    if g0 <= 0.0 || g1 <= 0.0 {
        1.0
    } else {
        (-2.0 * g0 * g1 / delta).exp()
    }
}

/// Crossing probability of a constant level approached from either side.
#[inline]
pub(crate) fn level_cross_prob(x0: f64, x1: f64, delta: f64, level: f64) -> f64 {
    let g0 = x0 - level;
    let g1 = x1 - level;
    if g0 * g1 <= 0.0 {
        1.0
    } else {
        (-2.0 * g0 * g1 / delta).exp()
    }
}

/// Bernoulli draw with the bridge line-crossing probability.
pub fn bridge_crosses(
    stream: &mut RngStream,
    x0: f64,
    x1: f64,
    delta: f64,
    a0: f64,
    a1: f64,
) -> Result<bool> {
    let p = bridge_cross_prob(x0, x1, delta, a0, a1)?;
    Ok(p >= 1.0 || stream.uniform() < p)
}
