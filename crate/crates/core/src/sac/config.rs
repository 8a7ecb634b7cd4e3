use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub gamma: f64,
    /// Polyak factor for the target critics.
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Environment steps with uniformly random actions before learning starts.
    pub warmup_steps: usize,
    /// Environment steps between gradient updates.
    pub steps_per_update: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub init_alpha: f64,
    pub auto_alpha: bool,
    /// Defaults to minus the action dimension.
    pub target_entropy: Option<f64>,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub twin_critics: bool,
    /// Rewards are multiplied by this before entering the critic targets.
    pub reward_scale: f64,
    /// Episodes between checkpoint writes; 0 writes only at the end.
    pub checkpoint_every: usize,
    /// Episodes averaged per training-curve point.
    pub curve_window: usize,
    /// Episodes between greedy validation runs; 0 disables them.
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            batch_size: 256,
            buffer_capacity: 1_000_000,
            warmup_steps: 1000,
            steps_per_update: 1,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            init_alpha: 0.2,
            auto_alpha: true,
            target_entropy: None,
            actor_hidden: vec![512, 512, 128],
            critic_hidden: vec![256, 256, 128],
            twin_critics: true,
            reward_scale: 0.05,
            checkpoint_every: 100,
            curve_window: 20,
            eval_every: 0,
            eval_episodes: 20,
        }
    }
}

impl SacConfig {
    /// Reduced-width settings used for the shipped desk-scale checkpoints.
    pub fn desk() -> Self {
        Self::from_toml_str(include_str!("../../configs/sac_desk.toml")).expect("bundled config is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: SacConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("sac config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("gamma", "must lie in (0, 1)"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("tau", "must lie in (0, 1]"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.buffer_capacity < 1 {
            return Err(Error::config("buffer_capacity", "must be at least 1"));
        }
        if self.steps_per_update < 1 {
            return Err(Error::config("steps_per_update", "must be at least 1"));
        }
        for (f, v) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr), ("alpha_lr", self.alpha_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(f, "must be positive"));
            }
        }
        if !(self.init_alpha > 0.0) {
            return Err(Error::config("init_alpha", "must be positive"));
        }
        if !(self.reward_scale > 0.0) {
            return Err(Error::config("reward_scale", "must be positive"));
        }
        if self.actor_hidden.iter().chain(&self.critic_hidden).any(|&w| w == 0) {
            return Err(Error::config("actor_hidden", "hidden widths must be non-zero"));
        }
        if self.curve_window < 1 {
            return Err(Error::config("curve_window", "must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = SacConfig::default();
        c.validate().unwrap();
        assert_eq!(SacConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
        SacConfig::desk().validate().unwrap();
    }

    #[test]
    fn field_errors_name_the_field() {
        let err = SacConfig::from_toml_str("gamma = 1.5").unwrap_err().to_string();
        assert!(err.contains("`gamma`"), "{err}");
        let err = SacConfig::from_toml_str("tau = 0.0").unwrap_err().to_string();
        assert!(err.contains("`tau`"), "{err}");
        assert!(SacConfig::from_toml_str("gama = 0.9").is_err());
    }
}
