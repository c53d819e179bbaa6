//! Session-length distributions, each rescaled to a requested mean.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Lognormal shape used when none is given.
pub const DEFAULT_LOGNORMAL_SIGMA: f64 = 1.5;

/// Weibull shape fitted to measured peer sessions.
pub const DEFAULT_WEIBULL_SHAPE: f64 = 0.59;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SessionDist<F> {
    Weibull { shape: F },
    LogNormal { sigma: F },
    Exponential,
}

impl<F: Scalar> SessionDist<F> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SessionDist::Weibull { shape } if !(shape > F::zero() && shape.is_finite()) => Err(
                Error::Config(format!("Weibull shape must be positive, got {shape}")),
            ),
            SessionDist::LogNormal { sigma } if !(sigma > F::zero() && sigma.is_finite()) => Err(
                Error::Config(format!("lognormal sigma must be positive, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }

    /// One session length from this family, scaled so its mean is `mean`.
    pub fn sample<R: Rng + ?Sized>(&self, mean: F, rng: &mut R) -> Result<F> {
        sample_session(self, mean, rng)
    }
}

/// Draws a session length.
///
/// * Weibull(k): scale `mean / Γ(1 + 1/k)`.
/// * Lognormal(σ): location `ln(mean) - σ²/2`.
/// * Exponential: rate `1 / mean`.
pub fn sample_session<F: Scalar, R: Rng + ?Sized>(
    dist: &SessionDist<F>,
    mean: F,
    rng: &mut R,
) -> Result<F> {
    if !(mean > F::zero() && mean.is_finite()) {
        return Err(Error::Config(format!(
            "mean session must be positive, got {mean}"
        )));
    }
    dist.validate()?;
    let x = match *dist {
        SessionDist::Weibull { shape } => {
            let scale = mean / (F::one() + shape.recip()).gamma();
            F::weibull(scale, shape, rng)
        }
        SessionDist::LogNormal { sigma } => {
            let mu = mean.ln() - sigma * sigma / F::lit(2.0);
            F::lognormal(mu, sigma, rng)
        }
        SessionDist::Exponential => F::exponential(mean.recip(), rng),
    };
    // Draws can round to zero in f32 for very small quantiles.
    Ok(if x > F::zero() {
        x
    } else {
        F::min_positive_value()
    })
}

impl<F: Scalar> Default for SessionDist<F> {
    fn default() -> Self {
        SessionDist::Weibull {
            shape: F::lit(DEFAULT_WEIBULL_SHAPE),
        }
    }
}

impl<F: Scalar> fmt::Display for SessionDist<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionDist::Weibull { shape } => write!(f, "weibull:{shape}"),
            SessionDist::LogNormal { sigma } => write!(f, "lognormal:{sigma}"),
            SessionDist::Exponential => write!(f, "exp"),
        }
    }
}

/// Parses `weibull:k`, `lognormal:s` (or bare `lognormal`) and `exp`.
impl<F: Scalar> FromStr for SessionDist<F> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (family, param) = match s.split_once(':') {
            Some((f, p)) => (f.trim(), Some(p.trim())),
            None => (s.trim(), None),
        };
        let number = |p: &str| -> Result<F> {
            p.parse::<f64>()
                .ok()
                .and_then(F::from_f64)
                .ok_or_else(|| Error::Config(format!("bad session parameter `{p}`")))
        };
        let dist = match (family, param) {
            ("weibull", Some(p)) => SessionDist::Weibull { shape: number(p)? },
            ("weibull", None) => SessionDist::default(),
            ("lognormal", Some(p)) => SessionDist::LogNormal { sigma: number(p)? },
            ("lognormal", None) => SessionDist::LogNormal {
                sigma: F::lit(DEFAULT_LOGNORMAL_SIGMA),
            },
            ("exp" | "exponential", None) => SessionDist::Exponential,
            _ => return Err(Error::Config(format!("unknown session distribution `{s}`"))),
        };
        dist.validate()?;
        Ok(dist)
    }
}
