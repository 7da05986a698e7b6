//! Counter-based random streams.
//!
//! Every random draw in the simulator comes from a ChaCha8 generator keyed by
//! the root seed and positioned on a stream whose 64-bit id packs
//! `(purpose, attempt, trial, a, b)`. Two draws with the same identifiers are
//! identical regardless of which thread produced them or in which order.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::FRAC_1_SQRT_2;

/// What a stream is used for. Occupies the top four bits of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Channel = 1,
    PilotNoise = 2,
    Symbols = 3,
    Placement = 4,
    Validation = 5,
}

const MAX_TRIAL: u64 = 1 << 32;
const MAX_ATTEMPT: u32 = 1 << 4;
const MAX_ENTITY: usize = 1 << 12;

/// Identifies the random draws of one Monte-Carlo trial (and redraw attempt).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub trial: u64,
    pub attempt: u32,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            trial: 0,
            attempt: 0,
        }
    }

    pub fn for_trial(self, trial: u64) -> Self {
        Self {
            trial,
            attempt: 0,
            ..self
        }
    }

    pub fn with_attempt(self, attempt: u32) -> Self {
        Self { attempt, ..self }
    }

    /// Stream id for `(purpose, a, b)` within this trial.
    ///
    /// Panics if an identifier does not fit its bit field; callers stay well
    /// inside the limits (4096 cells/users, 2^32 trials, 16 redraws).
    pub fn stream_id(&self, purpose: Purpose, a: usize, b: usize) -> u64 {
        assert!(self.trial < MAX_TRIAL, "trial index {} out of range", self.trial);
        assert!(self.attempt < MAX_ATTEMPT, "attempt {} out of range", self.attempt);
        assert!(a < MAX_ENTITY && b < MAX_ENTITY, "entity index out of range");
        ((purpose as u64) << 60)
            | ((self.attempt as u64) << 56)
            | (self.trial << 24)
            | ((a as u64) << 12)
            | b as u64
    }

    pub fn generator(&self, purpose: Purpose, a: usize, b: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id(purpose, a, b));
        rng
    }
}

/// One CN(0, 1) sample: independent real and imaginary parts of variance 1/2.
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// One unit-energy QPSK symbol drawn uniformly from `(±1 ± j)/√2`.
#[inline]
pub fn qpsk_symbol<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let bits: u8 = rng.random();
    let re = if bits & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    let im = if bits & 2 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    Complex64::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn identical_identifiers_give_identical_draws() {
        let s = RngStream::new(42).for_trial(7);
        let mut g1 = s.generator(Purpose::Channel, 1, 2);
        let mut g2 = s.generator(Purpose::Channel, 1, 2);
        let a: Vec<u64> = (0..8).map(|_| g1.next_u64()).collect();
        let b: Vec<u64> = (0..8).map(|_| g2.next_u64()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_identifiers_give_distinct_streams() {
        let s = RngStream::new(42);
        let ids = [
            s.stream_id(Purpose::Channel, 0, 1),
            s.stream_id(Purpose::Channel, 1, 0),
            s.stream_id(Purpose::PilotNoise, 0, 1),
            s.for_trial(1).stream_id(Purpose::Channel, 0, 1),
            s.with_attempt(1).stream_id(Purpose::Channel, 0, 1),
        ];
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                assert_ne!(ids[i], ids[j]);
            }
        }
        let mut g1 = s.generator(Purpose::Channel, 0, 1);
        let mut g2 = s.generator(Purpose::Channel, 1, 0);
        assert_ne!(g1.next_u64(), g2.next_u64());
    }

    #[test]
    fn complex_gaussian_has_half_variance_per_component() {
        let mut g = RngStream::new(3).generator(Purpose::Validation, 0, 0);
        let n = 200_000;
        let (mut sr, mut si) = (0.0, 0.0);
        for _ in 0..n {
            let z = complex_gaussian(&mut g);
            sr += z.re * z.re;
            si += z.im * z.im;
        }
        // standard error of a variance-1/2 estimate is 0.5*sqrt(2/n)
        let se = 0.5 * (2.0 / n as f64).sqrt();
        assert!((sr / n as f64 - 0.5).abs() < 5.0 * se);
        assert!((si / n as f64 - 0.5).abs() < 5.0 * se);
    }

    #[test]
    fn qpsk_has_unit_energy() {
        let mut g = RngStream::new(3).generator(Purpose::Symbols, 0, 0);
        for _ in 0..100 {
            assert!((qpsk_symbol(&mut g).norm_sqr() - 1.0).abs() < 1e-15);
        }
    }
}
