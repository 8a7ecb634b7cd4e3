use std::path::Path;

use serde::{Deserialize, Serialize};

use super::behavior::IdmParams;
use super::dynamics::{ActionLimits, DEFAULT_WHEELBASE};
use super::geometry::{Footprint, LanePath, RoadEdge};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Behavior {
    ExternalEgo,
    ConstantVelocity,
    #[serde(rename = "IDM")]
    Idm,
}

/// Closed uniform sampling intervals, one per state field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateRange {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub theta: [f64; 2],
    pub v: [f64; 2],
}

impl StateRange {
    fn validate(&self, field: &str) -> Result<()> {
        for (name, [lo, hi]) in [("x", self.x), ("y", self.y), ("theta", self.theta), ("v", self.v)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(
                    format!("{field}.initial_state_range.{name}"),
                    "interval must be finite and non-empty",
                ));
            }
        }
        if self.v[0] < 0.0 {
            return Err(Error::config(format!("{field}.initial_state_range.v"), "speed must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub behavior: Behavior,
    pub initial_state_range: StateRange,
    pub reference_path: LanePath,
    #[serde(default)]
    pub footprint: Footprint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConstants {
    pub r_max_vel: f64,
    pub r_max_ref: f64,
    pub r_col: f64,
    pub r_jerk: f64,
}

impl Default for RewardConstants {
    fn default() -> Self {
        Self {
            r_max_vel: 10.0,
            r_max_ref: 10.0,
            r_col: -100.0,
            r_jerk: -0.1,
        }
    }
}

/// Affine scaling applied to observations before they reach a network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservationScale {
    pub x_offset: f64,
    pub x_scale: f64,
    pub y_offset: f64,
    pub y_scale: f64,
    pub speed_scale: f64,
}

impl Default for ObservationScale {
    fn default() -> Self {
        Self {
            x_offset: 50.0,
            x_scale: 100.0,
            y_offset: 0.0,
            y_scale: 10.0,
            speed_scale: 10.0,
        }
    }
}

impl ObservationScale {
    /// Normalizes a raw `(x, y, v_x, v_y)*` observation in place.
    pub fn apply(&self, obs: &mut [f64]) {
        for chunk in obs.chunks_exact_mut(4) {
            chunk[0] = (chunk[0] - self.x_offset) / self.x_scale;
            chunk[1] = (chunk[1] - self.y_offset) / self.y_scale;
            chunk[2] /= self.speed_scale;
            chunk[3] /= self.speed_scale;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    /// First entry is the ego vehicle.
    pub agents: Vec<AgentSpec>,
    pub dt: f64,
    pub max_steps: usize,
    pub desired_speed: f64,
    #[serde(default)]
    pub reward_constants: RewardConstants,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_wheelbase")]
    pub wheelbase: f64,
    #[serde(default)]
    pub action_limits: ActionLimits,
    #[serde(default)]
    pub idm: IdmParams,
    #[serde(default)]
    pub road_edges: Vec<RoadEdge>,
    #[serde(default)]
    pub observation_scale: ObservationScale,
}

fn default_wheelbase() -> f64 {
    DEFAULT_WHEELBASE
}

pub const BUNDLED_SCENARIOS: [&str; 3] = ["two_lane_3v", "two_lane_4v", "highway_5v"];

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario config serializes")
    }

    /// One of the scenarios shipped with the crate.
    pub fn bundled(name: &str) -> Result<Self> {
        let text = match name {
            "two_lane_3v" => include_str!("../../scenarios/two_lane_3v.toml"),
            "two_lane_4v" => include_str!("../../scenarios/two_lane_4v.toml"),
            "highway_5v" => include_str!("../../scenarios/highway_5v.toml"),
            other => {
                return Err(Error::config(
                    "scenario",
                    format!("unknown bundled scenario `{other}` (expected one of {BUNDLED_SCENARIOS:?})"),
                ))
            }
        };
        Self::from_toml_str(text)
    }

    /// Loads `spec` as a file path, falling back to a bundled scenario name.
    pub fn resolve(spec: &str) -> Result<Self> {
        let p = Path::new(spec);
        if p.exists() {
            Self::load(p)
        } else {
            Self::bundled(spec)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::config("dt", "must be positive"));
        }
        if self.max_steps < 1 {
            return Err(Error::config("max_steps", "must be at least 1"));
        }
        if !(self.desired_speed >= 0.0) {
            return Err(Error::config("desired_speed", "must be non-negative"));
        }
        if !(self.wheelbase > 0.0) {
            return Err(Error::config("wheelbase", "must be positive"));
        }
        let egos = self.agents.iter().filter(|a| a.behavior == Behavior::ExternalEgo).count();
        if egos != 1 {
            return Err(Error::config("agents", format!("expected exactly one ExternalEgo, found {egos}")));
        }
        if self.agents[0].behavior != Behavior::ExternalEgo {
            return Err(Error::config("agents", "the first agent must be the ExternalEgo"));
        }
        for (i, a) in self.agents.iter().enumerate() {
            let field = format!("agents[{i}]");
            a.initial_state_range.validate(&field)?;
            a.footprint.validate(&format!("{field}.footprint"))?;
        }
        self.action_limits.validate()?;
        self.idm.validate()?;
        let s = &self.observation_scale;
        if !(s.x_scale > 0.0 && s.y_scale > 0.0 && s.speed_scale > 0.0) {
            return Err(Error::config("observation_scale", "scales must be positive"));
        }
        Ok(())
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn observation_dim(&self) -> usize {
        4 * self.agents.len()
    }

    pub fn ego(&self) -> &AgentSpec {
        &self.agents[0]
    }

    /// Copy of this scenario with all non-ego agents removed.
    pub fn without_others(&self) -> Self {
        let mut c = self.clone();
        c.agents.truncate(1);
        c
    }
}
