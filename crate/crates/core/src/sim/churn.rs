use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChurnMode {
    #[default]
    None,
    Lognormal,
}

impl FromStr for ChurnMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ChurnMode::None),
            "lognormal" => Ok(ChurnMode::Lognormal),
            other => Err(format!("expected none|lognormal, got `{other}`")),
        }
    }
}

/// Alternating renewal process per peer. Online sessions last
/// `max(1, round(L))` ticks with `L ~ lognormal(mu, sigma)`; offline periods
/// last `round(L' (1 - p) / p)` ticks for a fresh draw `L'`, so that the
/// long-run online fraction is `p = online_target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChurnModel {
    pub mode: ChurnMode,
    pub mu: f64,
    pub sigma: f64,
    pub online_target: f64,
}

/// `mu = ln(100 delta)`, `sigma = 0.5`, 90% online.
pub fn default_churn(mode: ChurnMode, delta_ticks: u64) -> ChurnModel {
    ChurnModel {
        mode,
        mu: (100.0 * delta_ticks as f64).ln(),
        sigma: 0.5,
        online_target: 0.9,
    }
}

impl ChurnModel {
    pub fn none() -> Self {
        default_churn(ChurnMode::None, 1000)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.mode == ChurnMode::None {
            return Ok(());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(SimError::Config(format!("churn_sigma must be > 0, got {}", self.sigma)));
        }
        if !self.mu.is_finite() {
            return Err(SimError::Config(format!("churn_mu must be finite, got {}", self.mu)));
        }
        if !(self.online_target > 0.0 && self.online_target <= 1.0) {
            return Err(SimError::Config(format!(
                "online_target must lie in (0, 1], got {}",
                self.online_target
            )));
        }
        Ok(())
    }

    fn session(&self) -> LogNormal<f64> {
        LogNormal::new(self.mu, self.sigma).expect("validated lognormal parameters")
    }

    pub fn starts_online<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        rng.random::<f64>() < self.online_target
    }

    pub fn online_duration<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        (self.session().sample(rng).round() as u64).max(1)
    }

    pub fn offline_duration<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let p = self.online_target;
        (self.session().sample(rng) * (1.0 - p) / p).round() as u64
    }
}
