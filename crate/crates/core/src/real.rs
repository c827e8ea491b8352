//! Scalar abstraction. Every numeric kernel in this crate is generic over
//! [`Real`] so the whole stack can run in `f32` or `f64`; the `f64` aliases
//! at the crate root are what most callers want.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating-point scalar usable throughout the crate.
///
/// Extends `num_traits::Float` with conversion from `f64` constants, the two
/// primitive random draws the estimators need, and the marker bounds required
/// to ship values across rayon workers.
pub trait Real:
    Float
    + FromPrimitive
    + NumAssignOps
    + Sum<Self>
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant; panics only if the value is not
    /// representable, which cannot happen for the finite literals used here.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant not representable in scalar type")
    }

    /// `log(2*pi)`.
    fn ln_two_pi() -> Self {
        Self::of(core::f64::consts::TAU.ln())
    }

    /// One draw from `N(0, 1)`.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from `U[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Real for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f64>()
    }
}

impl Real for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f32>()
    }
}
