use crate::error::{Error, Result};
use crate::overlay::{dimension_for, MAX_OVERLAY_DIM};
use crate::resize::ResizePolicy;
use crate::{SessionDistribution, Time};

/// Switch to new arrival and session parameters part-way through a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RateChange {
    pub at: Time,
    pub lambda: f64,
    pub mean_session: f64,
}

impl RateChange {
    pub fn stable_size(&self) -> f64 {
        self.lambda * self.mean_session
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChurnConfig {
    /// Arrival rate, peers per time unit.
    pub lambda: f64,
    pub session: SessionDistribution,
    pub mean_session: f64,
    pub horizon: Time,
    pub seed: u64,
    pub sample_interval: Time,
    /// Batch arrivals per unit cycle instead of a continuous Poisson stream.
    pub per_cycle: bool,
    pub rate_change: Option<RateChange>,
    /// Template dimension; derived from the stable size when unset.
    pub dim: Option<u8>,
    /// Enables the dimension adjustment protocol.
    pub resize: Option<ResizePolicy>,
    /// When inspections start; defaults to the end of the warm-up.
    pub resize_start: Option<Time>,
    /// Inserts and searches issued at each stable sample.
    pub data_ops_per_sample: usize,
    /// Warm-up length as a multiple of the stable size, in time units.
    pub warmup_multiple: f64,
    pub track_tree: bool,
    /// Full invariant check every this many events.
    pub self_check_every: Option<u64>,
}

impl ChurnConfig {
    /// Continuous-time steady-state configuration with stable size `n`.
    pub fn steady(n: f64, lambda: f64, horizon: Time, seed: u64) -> Self {
        Self {
            lambda,
            session: SessionDistribution::default(),
            mean_session: n / lambda,
            horizon,
            seed,
            sample_interval: (n / 10.0).max(1.0),
            per_cycle: false,
            rate_change: None,
            dim: None,
            resize: None,
            resize_start: None,
            data_ops_per_sample: 0,
            warmup_multiple: 5.0,
            track_tree: false,
            self_check_every: None,
        }
    }

    /// Expected steady-state network size.
    pub fn stable_size(&self) -> f64 {
        self.lambda * self.mean_session
    }

    pub fn warmup_time(&self) -> Time {
        self.warmup_multiple * self.stable_size()
    }

    pub fn dimension(&self) -> Result<u8> {
        match self.dim {
            Some(d) => Ok(d),
            None => dimension_for(self.stable_size()),
        }
    }

    pub fn resize_start_time(&self) -> Time {
        self.resize_start.unwrap_or_else(|| self.warmup_time())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("lambda", self.lambda)?;
        positive("mean_session", self.mean_session)?;
        positive("sample_interval", self.sample_interval)?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon must be non-negative, got {}",
                self.horizon
            )));
        }
        if !(self.warmup_multiple >= 0.0 && self.warmup_multiple.is_finite()) {
            return Err(Error::Config(format!(
                "warmup_multiple must be non-negative, got {}",
                self.warmup_multiple
            )));
        }
        self.session.validate()?;
        let dim = self.dimension()?;
        if !(2..=MAX_OVERLAY_DIM).contains(&dim) {
            return Err(Error::Config(format!(
                "dimension {dim} outside 2..={MAX_OVERLAY_DIM}"
            )));
        }
        if let Some(rc) = &self.rate_change {
            positive("rate change lambda", rc.lambda)?;
            positive("rate change mean_session", rc.mean_session)?;
            if !(rc.at > 0.0 && rc.at < self.horizon) {
                return Err(Error::Config(format!(
                    "rate change time {} must lie inside (0, horizon = {})",
                    rc.at, self.horizon
                )));
            }
        }
        if let Some(policy) = &self.resize {
            policy.validate()?;
        }
        if let Some(0) = self.self_check_every {
            return Err(Error::Config("self_check_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_size_and_dimension() {
        let c = ChurnConfig::steady(10000.0, 10.0, 300000.0, 7);
        assert_eq!(c.stable_size(), 10000.0);
        assert_eq!(c.dimension().unwrap(), 6);
        assert_eq!(c.warmup_time(), 50000.0);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = ChurnConfig::steady(1000.0, 10.0, 1000.0, 1);
        c.lambda = 0.0;
        assert!(c.validate().is_err());

        let mut c = ChurnConfig::steady(1000.0, 10.0, 1000.0, 1);
        c.rate_change = Some(RateChange {
            at: 2000.0,
            lambda: 5.0,
            mean_session: 100.0,
        });
        assert!(c.validate().is_err());

        let mut c = ChurnConfig::steady(1000.0, 10.0, 1000.0, 1);
        c.horizon = -1.0;
        assert!(c.validate().is_err());

        // Too small for any dimension.
        let c = ChurnConfig::steady(8.0, 1.0, 10.0, 1);
        assert!(c.validate().is_err());
    }
}
