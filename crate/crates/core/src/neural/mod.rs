//! Minimal dense-network engine sized for the actor and critic networks.

pub mod adam;
pub mod checkpoint;
pub mod mlp;

pub use adam::AdamState;
pub use mlp::{param_count, ForwardCache, MlpParams};
