use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::behavior::{step_constant_velocity, step_idm, LeaderInfo};
use super::collision::{check_collision, check_edge_collision};
use super::config::{Behavior, RewardConstants, ScenarioConfig, StateRange};
use super::dynamics::{lateral_acceleration, step_single_track, Action, VehicleState};
use super::record::EpisodeRecord;
use crate::error::{Error, Result};

pub const MAX_RESET_ATTEMPTS: usize = 100;

/// Per-step quantities the reward depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardTerms {
    pub speed: f64,
    pub desired_speed: f64,
    pub ref_distance: f64,
    pub jerk_long: f64,
    pub jerk_lat: f64,
    pub collided: bool,
}

/// R = R_ref + R_comfort + R_vel + R_col.
pub fn reward_from_terms(c: &RewardConstants, t: &RewardTerms) -> f64 {
    let r_vel = c.r_max_vel - (t.speed - t.desired_speed).powi(2);
    let r_ref = c.r_max_ref - t.ref_distance.powi(2);
    let r_comfort = c.r_jerk * (t.jerk_long.powi(2) + t.jerk_lat.powi(2));
    let r_col = if t.collided { c.r_col } else { 0.0 };
    r_ref + r_comfort + r_vel + r_col
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub collided: bool,
    pub done: bool,
}

/// One running episode. Single-threaded; distinct worlds are independent.
#[derive(Debug, Clone)]
pub struct World {
    config: Arc<ScenarioConfig>,
    states: Vec<VehicleState>,
    step: usize,
    prev_action: Action,
    prev_lat_accel: f64,
    done: bool,
    collided: bool,
    hard_brakes: usize,
    record: EpisodeRecord,
}

fn sample_state(rng: &mut ChaCha8Rng, r: &StateRange) -> VehicleState {
    let mut pick = |[lo, hi]: [f64; 2]| lo + (hi - lo) * rng.gen::<f64>();
    VehicleState::new(pick(r.x), pick(r.y), pick(r.theta), pick(r.v))
}

impl World {
    /// Samples initial states uniformly from each agent's ranges. Worlds with
    /// overlapping footprints are redrawn.
    pub fn reset(config: Arc<ScenarioConfig>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(config.rng_seed);
        let n = config.agents.len();
        for _ in 0..MAX_RESET_ATTEMPTS {
            let states: Vec<VehicleState> = config.agents.iter().map(|a| sample_state(&mut rng, &a.initial_state_range)).collect();
            let overlap = (0..n).any(|i| (i + 1..n).any(|j| check_collision(&states[i], &config.agents[i].footprint, &states[j], &config.agents[j].footprint)));
            if overlap {
                continue;
            }
            let record = EpisodeRecord::start(&states);
            return Ok(Self {
                config,
                states,
                step: 0,
                prev_action: Action::default(),
                prev_lat_accel: 0.0,
                done: false,
                collided: false,
                hard_brakes: 0,
                record,
            });
        }
        Err(Error::InitialOverlap { attempts: MAX_RESET_ATTEMPTS })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn states(&self) -> &[VehicleState] {
        &self.states
    }

    pub fn ego(&self) -> &VehicleState {
        &self.states[0]
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Number of IDM steps that hit the collapsed-gap hard-braking branch.
    pub fn hard_brake_events(&self) -> usize {
        self.hard_brakes
    }

    pub fn record(&self) -> &EpisodeRecord {
        &self.record
    }

    pub fn into_record(self) -> EpisodeRecord {
        self.record
    }

    /// Concatenated `(x, y, v_x, v_y)` for every vehicle, ego first.
    pub fn observe(&self) -> Vec<f64> {
        observe_states(&self.states)
    }

    /// Observation with the scenario's normalization applied.
    pub fn observe_normalized(&self) -> Vec<f64> {
        let mut o = self.observe();
        self.config.observation_scale.apply(&mut o);
        o
    }

    fn ref_distance(&self, s: &VehicleState) -> f64 {
        self.config.ego().reference_path.distance_to(s.position())
    }

    /// Leader of agent `i`: nearest vehicle ahead on the same path, counting
    /// the ego once any part of it has entered the lane.
    fn leader_of(&self, i: usize) -> Option<LeaderInfo> {
        let spec = &self.config.agents[i];
        let path = &spec.reference_path;
        let me = &self.states[i];
        let s_me = path.project(me.position()).s;
        let mut best: Option<(f64, LeaderInfo)> = None;
        for (j, other) in self.config.agents.iter().enumerate() {
            if j == i {
                continue;
            }
            let st = &self.states[j];
            let proj = path.project(st.position());
            let same_lane = if other.behavior == Behavior::ExternalEgo {
                proj.lateral.abs() < 0.5 * (path.width() + other.footprint.width)
            } else {
                other.reference_path == *path
            };
            if !same_lane || proj.s <= s_me {
                continue;
            }
            let ds = proj.s - s_me;
            let gap = ds - 0.5 * (spec.footprint.length + other.footprint.length);
            let along = st.v * (st.theta - path.heading_at(proj.s)).cos();
            if best.as_ref().is_none_or(|(d, _)| ds < *d) {
                best = Some((ds, LeaderInfo { gap, speed: along.max(0.0) }));
            }
        }
        best.map(|(_, l)| l)
    }

    fn ego_collides(&self, states: &[VehicleState]) -> bool {
        let cfg = &self.config;
        let ego_fp = &cfg.agents[0].footprint;
        (1..states.len()).any(|j| check_collision(&states[0], ego_fp, &states[j], &cfg.agents[j].footprint))
            || cfg.road_edges.iter().any(|e| check_edge_collision(&states[0], ego_fp, e))
    }

    /// Advances every agent one step. Inputs outside the limits are clamped.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        if !(action.delta.is_finite() && action.a.is_finite()) {
            return Err(Error::NonFinite {
                context: "ego action",
                index: self.step,
            });
        }
        let cfg = Arc::clone(&self.config);
        let u = cfg.action_limits.clamp(action);
        let dt = cfg.dt;

        let mut next = Vec::with_capacity(self.states.len());
        next.push(step_single_track(self.states[0], u, dt, cfg.wheelbase));
        for (i, spec) in cfg.agents.iter().enumerate().skip(1) {
            let s = self.states[i];
            let n = match spec.behavior {
                Behavior::ConstantVelocity => step_constant_velocity(s, &spec.reference_path, dt),
                Behavior::Idm => {
                    let st = step_idm(s, self.leader_of(i), &cfg.idm, &spec.reference_path, dt);
                    self.hard_brakes += st.hard_brake as usize;
                    st.state
                }
                Behavior::ExternalEgo => unreachable!("validated: only agent 0 is external"),
            };
            next.push(n);
        }

        let collided = self.ego_collides(&next);
        let lat = lateral_acceleration(self.states[0].v, u.delta, cfg.wheelbase);
        let terms = RewardTerms {
            speed: next[0].v,
            desired_speed: cfg.desired_speed,
            ref_distance: self.ref_distance(&next[0]),
            jerk_long: (u.a - self.prev_action.a) / dt,
            jerk_lat: (lat - self.prev_lat_accel) / dt,
            collided,
        };
        let reward = reward_from_terms(&cfg.reward_constants, &terms);

        self.states = next;
        self.step += 1;
        self.prev_action = u;
        self.prev_lat_accel = lat;
        self.collided = collided;
        self.done = collided || self.step >= cfg.max_steps;
        self.record.push(u, &self.states, reward, collided);
        if self.done {
            self.record.success = !collided;
        }
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            collided,
            done: self.done,
        })
    }
}

pub fn observe_states(states: &[VehicleState]) -> Vec<f64> {
    let mut out = Vec::with_capacity(4 * states.len());
    for s in states {
        out.extend_from_slice(&[s.x, s.y, s.v * s.theta.cos(), s.v * s.theta.sin()]);
    }
    out
}
