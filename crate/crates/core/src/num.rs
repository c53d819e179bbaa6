//! Scalar abstraction for the numeric leaf code (session draws, statistics).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal, Weibull};

/// Floating point types the session samplers and statistics work over.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// The gamma function.
    fn gamma(self) -> Self;

    /// Weibull draw with the given scale and shape (both positive).
    fn weibull<R: Rng + ?Sized>(scale: Self, shape: Self, rng: &mut R) -> Self;

    /// Lognormal draw whose logarithm has location `mu` and scale `sigma`.
    fn lognormal<R: Rng + ?Sized>(mu: Self, sigma: Self, rng: &mut R) -> Self;

    /// Exponential draw with the given rate.
    fn exponential<R: Rng + ?Sized>(rate: Self, rng: &mut R) -> Self;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in the scalar type")
    }
}

macro_rules! impl_scalar {
    ($f:ty) => {
        impl Scalar for $f {
            fn gamma(self) -> Self {
                statrs::function::gamma::gamma(self as f64) as $f
            }

            fn weibull<R: Rng + ?Sized>(scale: Self, shape: Self, rng: &mut R) -> Self {
                Weibull::new(scale, shape)
                    .expect("positive Weibull parameters")
                    .sample(rng)
            }

            fn lognormal<R: Rng + ?Sized>(mu: Self, sigma: Self, rng: &mut R) -> Self {
                LogNormal::new(mu, sigma)
                    .expect("finite lognormal parameters")
                    .sample(rng)
            }

            fn exponential<R: Rng + ?Sized>(rate: Self, rng: &mut R) -> Self {
                Exp::new(rate)
                    .expect("positive exponential rate")
                    .sample(rng)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);
