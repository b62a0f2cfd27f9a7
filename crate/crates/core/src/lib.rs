//! Planar control stack for human-humanoid co-transportation.
//!
//! The high level predicts the coupled robot/object motion with an
//! interaction-LIP, shapes the desired compliance with an admittance model and
//! plans footholds with a receding-horizon QP. The low level allocates robot and
//! object accelerations and hand forces with a small interaction QP, while the
//! I-LIP coupling spring is adapted online toward the desired separation.

pub mod admittance;
pub mod error;
pub mod flow;
pub mod ilip;
pub mod metrics;
pub mod mpc;
pub mod qp;
pub mod state;
pub mod stiffness;
pub mod wbc;

pub use error::{ConfigError, ModelError};
pub use state::{
    angle_diff, normalize_angle, rotate_to_local, rotate_to_world, ComplianceParams, FootPose, FootSide, GaitConfig, HeadingRotation, IntentEstimate, Mat2,
    PlanarState, SpringDamper, Vec2,
};
