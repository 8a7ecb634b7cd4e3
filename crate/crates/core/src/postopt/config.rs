use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptWeights {
    pub track: f64,
    pub jerk: f64,
    pub collision: f64,
    pub boundary: f64,
    /// Soft penalty on control-limit violations.
    pub limits: f64,
}

impl Default for OptWeights {
    fn default() -> Self {
        Self {
            track: 1.0,
            jerk: 1.0,
            collision: 200.0,
            boundary: 200.0,
            limits: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSettings {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub relative_tolerance: f64,
    pub initial_lambda: f64,
    /// Forward-difference step for numerical Jacobians.
    pub fd_step: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            relative_tolerance: 1e-10,
            initial_lambda: 1e-4,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    pub weights: OptWeights,
    /// Required clearance to other agents beyond the footprints [m].
    pub safety_distance: f64,
    /// Required clearance to road edges [m].
    pub boundary_margin: f64,
    pub solver: LmSettings,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            weights: OptWeights::default(),
            safety_distance: 1.0,
            boundary_margin: 0.3,
            solver: LmSettings::default(),
        }
    }
}

impl OptConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: OptConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("opt config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        for (f, v) in [
            ("weights.track", w.track),
            ("weights.jerk", w.jerk),
            ("weights.collision", w.collision),
            ("weights.boundary", w.boundary),
            ("weights.limits", w.limits),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(f, "must be finite and non-negative"));
            }
        }
        if !(self.safety_distance > 0.0) {
            return Err(Error::config("safety_distance", "must be positive"));
        }
        if !(self.boundary_margin >= 0.0) {
            return Err(Error::config("boundary_margin", "must be non-negative"));
        }
        let s = &self.solver;
        if s.max_iterations < 1 {
            return Err(Error::config("solver.max_iterations", "must be at least 1"));
        }
        if !(s.initial_lambda > 0.0) {
            return Err(Error::config("solver.initial_lambda", "must be positive"));
        }
        if !(s.fd_step > 0.0) {
            return Err(Error::config("solver.fd_step", "must be positive"));
        }
        if !(s.gradient_tolerance >= 0.0 && s.relative_tolerance >= 0.0) {
            return Err(Error::config("solver", "tolerances must be non-negative"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = OptConfig::default();
        c.validate().unwrap();
        assert_eq!(OptConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
        let partial = OptConfig::from_toml_str("safety_distance = 2.0\n[weights]\njerk = 1.0").unwrap();
        assert_eq!(partial.safety_distance, 2.0);
        assert_eq!(partial.weights.jerk, 1.0);
        assert_eq!(partial.weights.track, 1.0);
    }

    #[test]
    fn invalid_fields_are_named() {
        let err = OptConfig::from_toml_str("safety_distance = 0.0").unwrap_err().to_string();
        assert!(err.contains("safety_distance"), "{err}");
        let err = OptConfig::from_toml_str("[weights]\ncollision = -1.0").unwrap_err().to_string();
        assert!(err.contains("weights.collision"), "{err}");
    }
}
