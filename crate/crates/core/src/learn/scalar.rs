//! Float abstraction so the same network code runs in f32 for training and
//! f64 for finite-difference gradient checks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::Stream;

pub trait Scalar:
    ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + num_traits::Float
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn standard_normal(rng: &mut Stream) -> Self;
    fn uniform(rng: &mut Stream, lo: Self, hi: Self) -> Self;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> f32 {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn standard_normal(rng: &mut Stream) -> f32 {
        rng.sample(StandardNormal)
    }
    fn uniform(rng: &mut Stream, lo: f32, hi: f32) -> f32 {
        rng.random_range(lo..=hi)
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> f64 {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn standard_normal(rng: &mut Stream) -> f64 {
        rng.sample(StandardNormal)
    }
    fn uniform(rng: &mut Stream, lo: f64, hi: f64) -> f64 {
        rng.random_range(lo..=hi)
    }
}

/// Shorthand for typed literals in generic numeric code.
pub fn lit<S: Scalar>(x: f64) -> S {
    S::from_f64(x)
}
