//! Interaction-aware retargeting of two-person motion onto two humanoid
//! robots, plus the graph priors, rewards, curriculum sampling, phase
//! synchronization and metrics built on top of it.

pub mod collision;
pub mod curriculum;
pub mod fixtures;
pub mod geometry;
pub mod interaction_mesh;
pub mod metrics;
pub mod motion_io;
pub mod phase_sync;
pub mod qp;
pub mod retarget;
pub mod rewards;
pub mod robot_model;
