use rand::Rng;

use super::SimError;

/// Message channel: independent drop with probability `drop_prob`, otherwise a
/// delay drawn uniformly from the integer ticks in
/// `[round(min * delta), round(max * delta)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkModel {
    pub drop_prob: f64,
    pub delay_min_factor: f64,
    pub delay_max_factor: f64,
}

impl Default for NetworkModel {
    fn default() -> Self {
        NetworkModel {
            drop_prob: 0.0,
            delay_min_factor: 0.0,
            delay_max_factor: 0.0,
        }
    }
}

impl NetworkModel {
    pub fn new(drop_prob: f64, delay_min_factor: f64, delay_max_factor: f64) -> Result<Self, SimError> {
        let net = NetworkModel {
            drop_prob,
            delay_min_factor,
            delay_max_factor,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(SimError::Config(format!(
                "drop_prob must lie in [0, 1], got {}",
                self.drop_prob
            )));
        }
        if !(self.delay_min_factor >= 0.0 && self.delay_min_factor.is_finite()) {
            return Err(SimError::Config(format!(
                "delay_min_factor must be finite and >= 0, got {}",
                self.delay_min_factor
            )));
        }
        if !(self.delay_max_factor >= self.delay_min_factor && self.delay_max_factor.is_finite()) {
            return Err(SimError::Config(format!(
                "delay_max_factor must be finite and >= delay_min_factor, got {}",
                self.delay_max_factor
            )));
        }
        Ok(())
    }

    pub fn delay_bounds(&self, delta_ticks: u64) -> (u64, u64) {
        let d = delta_ticks as f64;
        (
            (self.delay_min_factor * d).round() as u64,
            (self.delay_max_factor * d).round() as u64,
        )
    }

    /// `None` when the message is lost, otherwise its delay in ticks. Both the
    /// drop and the delay variate are drawn for every message.
    pub fn transmit<R: Rng + ?Sized>(&self, delta_ticks: u64, rng: &mut R) -> Option<u64> {
        let u: f64 = rng.random();
        let (lo, hi) = self.delay_bounds(delta_ticks);
        let delay = rng.random_range(lo..=hi);
        (u >= self.drop_prob).then_some(delay)
    }
}
