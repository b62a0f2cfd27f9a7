//! Compliance shaping.
//!
//! The planner-level admittance turns the predicted object motion into goal CoM
//! positions and stance headings for the footstep MPC; the hand-level admittance
//! produces the desired accelerations tracked by the interaction QP.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::flow::CoupledModel;
use crate::ilip::object_step_map;
use crate::state::{angle_diff, normalize_angle, ComplianceParams, GaitConfig, HeadingRotation, IntentEstimate, PlanarState, Vec2};

/// Goal CoM positions `x_a(k+1..k+N)` and stance headings `θ_a(k..k+N-1)`.
///
/// `com_goals[i]` is tracked with heading `headings[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSet {
    pub com_goals: Vec<Vec2>,
    pub headings: Vec<f64>,
    /// Rate of the smooth heading profile at each sample.
    pub heading_rates: Vec<f64>,
}

impl GoalSet {
    pub fn horizon(&self) -> usize {
        self.com_goals.len()
    }
}

/// Heading and heading rate the yaw admittance is integrated from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HeadingState {
    pub angle: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DesiredAccels {
    /// Robot CoM, m/s².
    pub robot: Vec2,
    /// Object CoM, m/s².
    pub object: Vec2,
    /// Object yaw, rad/s².
    pub object_yaw: f64,
}

fn planner_model(heading: f64, params: &ComplianceParams) -> CoupledModel {
    CoupledModel {
        omega_sq: 0.0,
        stiffness: params.planner.stiffness / params.robot_mass,
        damping: params.planner.damping / params.robot_mass,
        heading,
        offset: params.desired_offset,
    }
}

/// Exact flow of the planner admittance over `duration` with the object moving
/// from `object_pos` at constant `object_vel`.
pub fn admittance_step_map(
    robot: &PlanarState,
    object_pos: &Vec2,
    object_vel: &Vec2,
    heading: f64,
    params: &ComplianceParams,
    duration: f64,
) -> Result<PlanarState, ModelError> {
    let step = planner_model(heading, params).affine_step(object_pos, object_vel, duration)?;
    // no pendulum term, so the foothold column is identically zero
    let next = step.apply(robot, &Vec2::zeros());
    if next.is_finite() {
        Ok(next)
    } else {
        Err(ModelError::NonFiniteResult)
    }
}

/// Samples of the stance-yaw admittance `θ̈ = k_P (θ_d − θ) − k_D θ̇`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadingRollout {
    pub angles: Vec<f64>,
    pub rates: Vec<f64>,
}

/// Integrates the yaw admittance exactly from `start` toward a constant target
/// and samples it at the end of each of the next `steps` steps, i.e. at
/// `t = T, 2T, …, NT`.
pub fn heading_rollout(start: HeadingState, target: f64, kp: f64, kd: f64, step_duration: f64, steps: usize) -> HeadingRollout {
    #[rustfmt::skip]
    let a = Matrix2::new(
        0.0, 1.0,
        -kp, -kd,
    ) * step_duration;
    let phi = a.exp();
    let mut err = nalgebra::Vector2::new(angle_diff(start.angle, target), start.rate);
    let mut angles = Vec::with_capacity(steps);
    let mut rates = Vec::with_capacity(steps);
    for _ in 0..steps {
        err = phi * err;
        angles.push(normalize_angle(target + err[0]));
        rates.push(err[1]);
    }
    HeadingRollout { angles, rates }
}

/// Heading samples only; see [`heading_rollout`].
pub fn yaw_admittance_rollout(theta0: f64, thetadot0: f64, target: f64, kp: f64, kd: f64, step_duration: f64, steps: usize) -> Vec<f64> {
    heading_rollout(HeadingState { angle: theta0, rate: thetadot0 }, target, kp, kd, step_duration, steps).angles
}

/// Goal set for the MPC from the predicted end-of-step robot and object states.
pub fn build_goal_set(
    robot: &PlanarState,
    object: &PlanarState,
    intent: &IntentEstimate,
    prev_heading: HeadingState,
    params: &ComplianceParams,
    cfg: &GaitConfig,
) -> Result<GoalSet, ModelError> {
    let n = cfg.horizon;
    let t = cfg.step_duration;
    let rollout = heading_rollout(prev_heading, intent.yaw, params.heading_kp, params.heading_kd, t, n);

    let mut com_goals = Vec::with_capacity(n);
    let mut robot_state = *robot;
    let mut object_state = PlanarState::new(object.pos, intent.velocity);
    for heading in &rollout.angles {
        robot_state = admittance_step_map(&robot_state, &object_state.pos, &intent.velocity, *heading, params, t)?;
        object_state = object_step_map(&object_state, &intent.velocity, t);
        com_goals.push(robot_state.pos);
    }
    Ok(GoalSet { com_goals, headings: rollout.angles, heading_rates: rollout.rates })
}

/// Hand-level admittance accelerations for the robot CoM, the object and the
/// object yaw.
#[allow(clippy::too_many_arguments)]
pub fn desired_accels(
    robot: &PlanarState,
    object: &PlanarState,
    object_yaw: f64,
    object_yaw_rate: f64,
    heading: f64,
    hand_force: &Vec2,
    params: &ComplianceParams,
) -> DesiredAccels {
    let rot = HeadingRotation::new(heading);
    let stretch = rot.to_local(&(object.pos - robot.pos)) - params.desired_offset;
    let rate = rot.to_local(&(object.vel - robot.vel));
    let coupling = rot.to_world(&(stretch.component_mul(&params.hand.stiffness) + rate.component_mul(&params.hand.damping)));
    DesiredAccels {
        robot: coupling / params.robot_mass,
        object: (hand_force - coupling) / params.object_mass,
        object_yaw: params.object_yaw_kp * angle_diff(heading, object_yaw) - params.object_yaw_kd * object_yaw_rate,
    }
}
