//! Internally controlled agents: constant-velocity path following and the
//! Intelligent Driver Model.

use serde::{Deserialize, Serialize};

use super::dynamics::VehicleState;
use super::geometry::LanePath;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdmParams {
    /// Desired free-road speed v0 [m/s].
    pub desired_speed: f64,
    /// Safe time headway T [s].
    pub time_headway: f64,
    /// Jam distance s0 [m].
    pub min_gap: f64,
    pub max_accel: f64,
    /// Comfortable deceleration b [m/s²].
    pub comfortable_decel: f64,
    /// Hard braking limit applied when the gap collapses.
    pub max_decel: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 5.0,
            time_headway: 1.5,
            min_gap: 2.0,
            max_accel: 1.0,
            comfortable_decel: 1.5,
            max_decel: 4.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("idm.desired_speed", self.desired_speed),
            ("idm.time_headway", self.time_headway),
            ("idm.max_accel", self.max_accel),
            ("idm.comfortable_decel", self.comfortable_decel),
            ("idm.max_decel", self.max_decel),
        ];
        for (field, v) in positive {
            if !(v > 0.0) {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if !(self.min_gap >= 0.0) {
            return Err(Error::config("idm.min_gap", "must be non-negative"));
        }
        Ok(())
    }
}

/// Bumper-to-bumper gap and speed of the vehicle ahead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderInfo {
    pub gap: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmAccel {
    pub accel: f64,
    /// The gap was non-positive and hard braking was applied.
    pub hard_brake: bool,
}

pub fn idm_acceleration(v: f64, leader: Option<LeaderInfo>, p: &IdmParams) -> IdmAccel {
    let free = 1.0 - (v / p.desired_speed).powi(4);
    let Some(l) = leader else {
        return IdmAccel {
            accel: p.max_accel * free,
            hard_brake: false,
        };
    };
    if l.gap <= 0.0 {
        return IdmAccel {
            accel: -p.max_decel,
            hard_brake: true,
        };
    }
    let dv = v - l.speed;
    let s_star = p.min_gap + (v * p.time_headway + v * dv / (2.0 * (p.max_accel * p.comfortable_decel).sqrt())).max(0.0);
    let accel = p.max_accel * (free - (s_star / l.gap).powi(2));
    IdmAccel {
        accel: accel.max(-p.max_decel),
        hard_brake: false,
    }
}

/// Moves a state to arc length `s` on `path`, keeping speed `v`.
fn place_on_path(path: &LanePath, s: f64, v: f64) -> VehicleState {
    let p = path.point_at(s);
    VehicleState::new(p.x, p.y, path.heading_at(s), v)
}

/// Advances `v·dt` along the centerline at unchanged speed.
pub fn step_constant_velocity(s: VehicleState, path: &LanePath, dt: f64) -> VehicleState {
    if dt == 0.0 {
        return s;
    }
    let proj = path.project(s.position());
    place_on_path(path, proj.s + s.v * dt, s.v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmStep {
    pub state: VehicleState,
    pub accel: f64,
    pub hard_brake: bool,
}

/// Advances one IDM step along the path under constant acceleration,
/// stopping at zero speed.
pub fn step_idm(s: VehicleState, leader: Option<LeaderInfo>, params: &IdmParams, path: &LanePath, dt: f64) -> IdmStep {
    let acc = idm_acceleration(s.v, leader, params);
    let proj = path.project(s.position());
    let v_next = s.v + acc.accel * dt;
    let (ds, v_next) = if v_next >= 0.0 {
        (s.v * dt + 0.5 * acc.accel * dt * dt, v_next)
    } else {
        // stops within the step
        (s.v * s.v / (2.0 * -acc.accel), 0.0)
    };
    IdmStep {
        state: place_on_path(path, proj.s + ds, v_next),
        accel: acc.accel,
        hard_brake: acc.hard_brake,
    }
}
