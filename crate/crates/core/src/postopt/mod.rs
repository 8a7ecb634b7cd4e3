//! Guided post-optimization: Levenberg-Marquardt over the ego control
//! sequence, pulled toward the policy trajectory and pushed away from the
//! recorded agents and the road edges.

pub mod config;
pub mod lm;
pub mod metrics;
pub mod problem;
pub mod solve;

pub use config::{LmSettings, OptConfig, OptWeights};
pub use lm::{central_difference_jacobian, forward_difference_jacobian, levenberg_marquardt, LeastSquares, LmReport, Termination};
pub use metrics::{closest_approach, homotopy_preserved, jerk_metric, min_clearance, passing_side, post_collision_check, stays_on_road, winding_angle};
pub use problem::{build_residuals, clearance, footprint_circles, rollout_controls, CostBreakdown, OptProblem, Residuals};
pub use solve::{jacobian, solve_lm, SolveReport};
