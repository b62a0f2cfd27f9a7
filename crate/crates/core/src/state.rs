//! Shared planar domain types, frames and configuration.
//!
//! Everything here is a plain value type. World-frame quantities are 2-vectors in
//! the ground plane; "local" quantities are expressed in the frame of the stance
//! foot, whose X' axis points along the foot heading.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Position/velocity pair of a point mass in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarState {
    pub pos: Vec2,
    pub vel: Vec2,
}

impl PlanarState {
    pub fn new(pos: Vec2, vel: Vec2) -> Self {
        Self { pos, vel }
    }

    pub fn at_rest(pos: Vec2) -> Self {
        Self { pos, vel: Vec2::zeros() }
    }

    pub fn is_finite(&self) -> bool {
        self.pos.iter().chain(self.vel.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FootSide {
    Left,
    Right,
}

impl FootSide {
    pub fn other(self) -> Self {
        match self {
            FootSide::Left => FootSide::Right,
            FootSide::Right => FootSide::Left,
        }
    }

    /// Lateral sign of the next foothold relative to a stance foot on this side:
    /// +1 for a right stance (next foot goes to the left), -1 otherwise.
    pub fn lateral_sign(self) -> f64 {
        match self {
            FootSide::Right => 1.0,
            FootSide::Left => -1.0,
        }
    }
}

/// Ground contact of one foot: world position, yaw and which foot it is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootPose {
    pub pos: Vec2,
    pub heading: f64,
    pub side: FootSide,
}

impl FootPose {
    pub fn new(pos: Vec2, heading: f64, side: FootSide) -> Self {
        Self { pos, heading: normalize_angle(heading), side }
    }

    pub fn rotation(&self) -> HeadingRotation {
        HeadingRotation::new(self.heading)
    }
}

/// Planar rotation about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingRotation {
    pub theta: f64,
    cos: f64,
    sin: f64,
}

impl HeadingRotation {
    pub fn new(theta: f64) -> Self {
        let (sin, cos) = theta.sin_cos();
        Self { theta, cos, sin }
    }

    pub fn matrix(&self) -> Mat2 {
        Mat2::new(self.cos, -self.sin, self.sin, self.cos)
    }

    /// `R v`
    pub fn to_world(&self, v: &Vec2) -> Vec2 {
        Vec2::new(self.cos * v.x - self.sin * v.y, self.sin * v.x + self.cos * v.y)
    }

    /// `Rᵀ v`
    pub fn to_local(&self, v: &Vec2) -> Vec2 {
        Vec2::new(self.cos * v.x + self.sin * v.y, -self.sin * v.x + self.cos * v.y)
    }

    /// `R diag(d) Rᵀ`, the world-frame form of a gain specified along the local axes.
    pub fn rotate_diag(&self, diag: &Vec2) -> Mat2 {
        let r = self.matrix();
        r * Mat2::from_diagonal(diag) * r.transpose()
    }

    /// `Rᵀ diag(d) R`
    pub fn rotate_diag_transposed(&self, diag: &Vec2) -> Mat2 {
        let r = self.matrix();
        r.transpose() * Mat2::from_diagonal(diag) * r
    }
}

/// Express a world vector in the frame rotated by `theta`.
pub fn rotate_to_local(v: &Vec2, theta: f64) -> Vec2 {
    HeadingRotation::new(theta).to_local(v)
}

pub fn rotate_to_world(v: &Vec2, theta: f64) -> Vec2 {
    HeadingRotation::new(theta).to_world(v)
}

/// Wrap an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut a = theta.rem_euclid(two_pi);
    if a > PI {
        a -= two_pi;
    }
    // rem_euclid maps -π to π already; guard the values that round onto -π.
    if a <= -PI {
        a += two_pi;
    }
    a
}

/// Shortest signed angular difference `a - b`, in `(-π, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

/// Gait timing and foot-placement geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitConfig {
    /// Step duration, s.
    pub step_duration: f64,
    /// CoM height, m.
    pub com_height: f64,
    pub gravity: f64,
    /// Maximum forward step length, m.
    pub max_step_forward: f64,
    /// Maximum lateral step length, m.
    pub max_step_lateral: f64,
    /// Minimum lateral clearance between feet, m.
    pub foot_width: f64,
    /// Swing apex height, m.
    pub swing_clearance: f64,
    /// MPC horizon in steps.
    pub horizon: usize,
    /// Low-level control tick, s.
    pub dt: f64,
}

impl Default for GaitConfig {
    fn default() -> Self {
        Self {
            step_duration: 0.4,
            com_height: 0.9,
            gravity: 9.81,
            max_step_forward: 0.35,
            max_step_lateral: 0.4,
            foot_width: 0.1,
            swing_clearance: 0.08,
            horizon: 3,
            dt: 1e-3,
        }
    }
}

impl GaitConfig {
    /// Natural frequency of the pendulum, `sqrt(g / h)`.
    pub fn omega0(&self) -> f64 {
        (self.gravity / self.com_height).sqrt()
    }

    /// Number of low-level ticks in one step.
    pub fn ticks_per_step(&self) -> usize {
        (self.step_duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite =
            [self.step_duration, self.com_height, self.gravity, self.max_step_forward, self.max_step_lateral, self.foot_width, self.swing_clearance, self.dt]
                .iter()
                .all(|v| v.is_finite());
        if !finite {
            return Err(ConfigError::invalid("gait", "non-finite parameter"));
        }
        if self.step_duration <= 0.0 || self.com_height <= 0.0 || self.gravity <= 0.0 {
            return Err(ConfigError::invalid("gait", "step duration, CoM height and gravity must be positive"));
        }
        if !(self.max_step_lateral > self.foot_width && self.foot_width > 0.0) {
            return Err(ConfigError::invalid("gait", "need max_step_lateral > foot_width > 0"));
        }
        if self.max_step_forward <= 0.0 {
            return Err(ConfigError::invalid("gait", "max_step_forward must be positive"));
        }
        if self.horizon == 0 {
            return Err(ConfigError::invalid("gait", "horizon must be at least one step"));
        }
        if self.dt <= 0.0 {
            return Err(ConfigError::invalid("gait", "dt must be positive"));
        }
        let ratio = self.step_duration / self.dt;
        if (ratio - ratio.round()).abs() * self.dt > 1e-9 {
            return Err(ConfigError::invalid("gait", "dt must divide the step duration"));
        }
        Ok(())
    }
}

/// Spring/damper pair along the local axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpringDamper {
    pub stiffness: Vec2,
    pub damping: Vec2,
}

impl SpringDamper {
    pub fn isotropic(k: f64, b: f64) -> Self {
        Self { stiffness: Vec2::new(k, k), damping: Vec2::new(b, b) }
    }

    /// High-compliance preset: 25 N/m, 10 N·s/m.
    pub fn high_compliance() -> Self {
        Self::isotropic(25.0, 10.0)
    }

    /// Low-compliance preset: 500 N/m, 40 N·s/m.
    pub fn low_compliance() -> Self {
        Self::isotropic(500.0, 40.0)
    }

    fn non_negative(&self) -> bool {
        self.stiffness.iter().chain(self.damping.iter()).all(|v| *v >= 0.0 && v.is_finite())
    }
}

/// Stiffness and damping at both control levels, plus the masses they act on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplianceParams {
    /// Planner-level admittance (`K_a`, `B_a`).
    pub planner: SpringDamper,
    /// Hand-level admittance (`K_h`, `B_h`).
    pub hand: SpringDamper,
    /// I-LIP coupling spring `[K^x_t, K^y]`; the x entry is modulated online.
    pub ilip_stiffness: Vec2,
    /// I-LIP coupling damper.
    pub ilip_damping: Vec2,
    /// Stance-yaw admittance gains.
    pub heading_kp: f64,
    pub heading_kd: f64,
    /// Object-yaw admittance gains.
    pub object_yaw_kp: f64,
    pub object_yaw_kd: f64,
    /// Desired object offset from the robot CoM in the stance-local frame, m.
    pub desired_offset: Vec2,
    pub robot_mass: f64,
    pub object_mass: f64,
}

impl Default for ComplianceParams {
    fn default() -> Self {
        let planner = SpringDamper::low_compliance();
        Self {
            planner,
            hand: SpringDamper::high_compliance(),
            ilip_stiffness: Vec2::new(100.0, 100.0),
            ilip_damping: planner.damping,
            heading_kp: 4.0,
            heading_kd: 4.0,
            object_yaw_kp: 6.0,
            object_yaw_kd: 5.0,
            desired_offset: Vec2::new(0.6, 0.0),
            robot_mass: 45.0,
            object_mass: 15.0,
        }
    }
}

impl ComplianceParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.planner.non_negative() || !self.hand.non_negative() {
            return Err(ConfigError::invalid("compliance", "stiffness and damping must be non-negative"));
        }
        let ilip = self.ilip_stiffness.iter().chain(self.ilip_damping.iter());
        if !ilip.clone().all(|v| *v >= 0.0 && v.is_finite()) {
            return Err(ConfigError::invalid("compliance", "I-LIP spring/damper must be non-negative"));
        }
        let gains = [self.heading_kp, self.heading_kd, self.object_yaw_kp, self.object_yaw_kd];
        if gains.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(ConfigError::invalid("compliance", "yaw gains must be non-negative"));
        }
        if !(self.robot_mass > 0.0 && self.object_mass > 0.0) {
            return Err(ConfigError::invalid("compliance", "masses must be positive"));
        }
        if !self.desired_offset.iter().all(|v| v.is_finite()) {
            return Err(ConfigError::invalid("compliance", "desired offset must be finite"));
        }
        Ok(())
    }
}

/// Smoothed estimate of the leader's intended object velocity and yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntentEstimate {
    pub velocity: Vec2,
    pub yaw: f64,
    /// Velocity smoothing factor in `(0, 1]`.
    pub alpha: f64,
    /// Yaw smoothing factor in `(0, 1]`.
    pub beta: f64,
}

impl IntentEstimate {
    pub fn new(velocity: Vec2, yaw: f64, alpha: f64, beta: f64) -> Result<Self, ConfigError> {
        let est = Self { velocity, yaw: normalize_angle(yaw), alpha, beta };
        est.validate()?;
        Ok(est)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let in_range = |v: f64| v > 0.0 && v <= 1.0;
        if !in_range(self.alpha) || !in_range(self.beta) {
            return Err(ConfigError::invalid("intent", "smoothing factors must lie in (0, 1]"));
        }
        Ok(())
    }
}
