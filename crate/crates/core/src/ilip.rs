//! Interaction-LIP prediction: intent smoothing, the continuous coupled pendulum
//! and its exact step-to-step maps for the robot and the object.

use crate::error::ModelError;
use crate::flow::{AffineStep, CoupledModel};
use crate::state::{angle_diff, normalize_angle, ComplianceParams, FootPose, GaitConfig, IntentEstimate, PlanarState, Vec2};

/// Exponential moving average of the measured object velocity and yaw.
pub fn update_intent(est: &IntentEstimate, measured_vel: &Vec2, measured_yaw: f64) -> IntentEstimate {
    let velocity = est.velocity * est.alpha + measured_vel * (1.0 - est.alpha);
    // blend along the shortest arc so a ±π seam does not drag the estimate through 0
    let yaw = normalize_angle(est.yaw + (1.0 - est.beta) * angle_diff(measured_yaw, est.yaw));
    IntentEstimate { velocity, yaw, ..*est }
}

/// Arguments of one I-LIP step: robot state at the start of the step, object
/// position at that instant, the assumed constant object velocity, the stance
/// foot and the coupling spring/damper (N/m, N·s/m, local axes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlipStepInput {
    pub robot: PlanarState,
    pub object_pos: Vec2,
    pub object_vel: Vec2,
    pub foot: FootPose,
    pub stiffness: Vec2,
    pub damping: Vec2,
    pub duration: f64,
}

fn ilip_model(heading: f64, stiffness: &Vec2, damping: &Vec2, offset: &Vec2, robot_mass: f64, omega0: f64) -> CoupledModel {
    CoupledModel { omega_sq: omega0 * omega0, stiffness: stiffness / robot_mass, damping: damping / robot_mass, heading, offset: *offset }
}

/// Continuous I-LIP CoM acceleration for an object currently at `object_pos`.
pub fn ilip_accel(robot: &PlanarState, foot: &FootPose, object_pos: &Vec2, object_vel: &Vec2, params: &ComplianceParams, cfg: &GaitConfig) -> Vec2 {
    let model = ilip_model(foot.heading, &params.ilip_stiffness, &params.ilip_damping, &params.desired_offset, params.robot_mass, cfg.omega0());
    model.accel(robot, &foot.pos, object_pos, object_vel, 0.0)
}

/// Affine form of the I-LIP step map in (robot state, foothold) for a given
/// heading, coupling and object trajectory.
#[allow(clippy::too_many_arguments)]
pub fn ilip_affine_step(
    heading: f64,
    object_pos: &Vec2,
    object_vel: &Vec2,
    stiffness: &Vec2,
    damping: &Vec2,
    desired_offset: &Vec2,
    robot_mass: f64,
    cfg: &GaitConfig,
) -> Result<AffineStep, ModelError> {
    let model = ilip_model(heading, stiffness, damping, desired_offset, robot_mass, cfg.omega0());
    model.affine_step(object_pos, object_vel, cfg.step_duration)
}

/// Robot CoM state at the end of one step of duration `input.duration`.
pub fn ilip_step_map(input: &IlipStepInput, desired_offset: &Vec2, robot_mass: f64, cfg: &GaitConfig) -> Result<PlanarState, ModelError> {
    let model = ilip_model(input.foot.heading, &input.stiffness, &input.damping, desired_offset, robot_mass, cfg.omega0());
    let step = model.affine_step(&input.object_pos, &input.object_vel, input.duration)?;
    let next = step.apply(&input.robot, &input.foot.pos);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(ModelError::NonFiniteResult)
    }
}

/// Object state after `duration` under the constant-velocity assumption.
pub fn object_step_map(object: &PlanarState, velocity: &Vec2, duration: f64) -> PlanarState {
    PlanarState::new(object.pos + velocity * duration, *velocity)
}
