use crate::error::{Error, Result};

/// LMU hyperparameters. The timestep is one token and `theta` is measured
/// in tokens.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmuConfig {
    pub theta: f64,
    pub q: usize,
    pub q_prime: usize,
}

impl LmuConfig {
    /// Config with the default reduced order `max(1, round(q / 10))`.
    pub fn new(theta: f64, q: usize) -> Result<Self> {
        Self::with_q_prime(theta, q, Self::default_q_prime(q))
    }

    pub fn with_q_prime(theta: f64, q: usize, q_prime: usize) -> Result<Self> {
        let cfg = Self { theta, q, q_prime };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn default_q_prime(q: usize) -> usize {
        ((q as f64 / 10.0).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 1 {
            return Err(Error::Config("order q must be at least 1".into()));
        }
        if !(self.theta >= 1.0) || !self.theta.is_finite() {
            return Err(Error::Config(format!(
                "window theta must be a finite value >= 1, got {}",
                self.theta
            )));
        }
        if self.q_prime < 1 || self.q_prime > self.q {
            return Err(Error::Config(format!(
                "reduced order q' must lie in 1..={}, got {}",
                self.q, self.q_prime
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_reduced_order() {
        assert_eq!(LmuConfig::new(1024.0, 250).unwrap().q_prime, 25);
        assert_eq!(LmuConfig::new(8.0, 4).unwrap().q_prime, 1);
        assert_eq!(LmuConfig::new(8.0, 40).unwrap().q_prime, 4);
    }

    #[test]
    fn rejects_invalid() {
        assert!(LmuConfig::new(0.5, 4).is_err());
        assert!(LmuConfig::new(4.0, 0).is_err());
        assert!(LmuConfig::with_q_prime(4.0, 4, 5).is_err());
        assert!(LmuConfig::new(f64::NAN, 4).is_err());
    }
}
