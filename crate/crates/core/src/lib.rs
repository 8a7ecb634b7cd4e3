//! Lane-merge behavior generation in two stages: a soft actor-critic policy
//! picks a maneuver and produces a guiding trajectory, then a
//! Levenberg-Marquardt post-optimization smooths it against the recorded
//! motion of the other agents and acts as a safety layer.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod neural;
pub mod parallel;
pub mod pipeline;
pub mod postopt;
pub mod sac;
pub mod sim;

pub use error::{Error, Result};
pub use parallel::Execution;
