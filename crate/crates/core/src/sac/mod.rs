//! Soft actor-critic: squashed-Gaussian policy, twin soft-Q critics with
//! Polyak targets, replay buffer and the training loop.

pub mod agent;
pub mod config;
pub mod policy;
pub mod replay;
pub mod train;

pub use agent::{soft_bellman_target, LossReport, SacAgent};
pub use config::SacConfig;
pub use policy::{greedy_action, sample_action, PolicyNet, PolicySample};
pub use replay::{Batch, ReplayBuffer};
pub use train::{curve_to_csv, greedy_episode, train, CurvePoint, EpisodeStats, TrainOutcome, CURVE_CSV_HEADER};
