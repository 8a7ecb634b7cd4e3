//! Episodic multi-agent lane-merge simulator.

pub mod behavior;
pub mod collision;
pub mod config;
pub mod dynamics;
pub mod geometry;
pub mod record;
pub mod world;

pub use behavior::{idm_acceleration, step_constant_velocity, step_idm, IdmParams, LeaderInfo};
pub use collision::{check_collision, check_edge_collision, OrientedBox};
pub use config::{AgentSpec, Behavior, ObservationScale, RewardConstants, ScenarioConfig, StateRange};
pub use dynamics::{step_single_track, Action, ActionLimits, VehicleState};
pub use geometry::{Footprint, LanePath, RoadEdge, Vec2};
pub use record::{EpisodeRecord, EPISODE_CSV_HEADER};
pub use world::{reward_from_terms, RewardTerms, StepOutcome, World};
