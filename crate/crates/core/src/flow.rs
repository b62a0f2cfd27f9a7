//! Exact flow of the coupled point-mass models over one step.
//!
//! Both the I-LIP and the planner admittance model reduce, in the stance-local
//! frame, to two decoupled scalar systems
//!
//! ```text
//! z'' = (w² - k) z - b z' + d0 + d1 t
//! ```
//!
//! with `k = K/m`, `b = B/m`. The exponential of the augmented matrix acting on
//! `(z, z', p, q)` with `p' = 0, q' = p` yields the homogeneous transition and the
//! responses to unit constant and unit ramp forcing in one evaluation, so the
//! whole step map is affine in the initial state and in the forcing terms.

use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector2, Vector4};

use crate::error::ModelError;
use crate::state::{HeadingRotation, PlanarState, Vec2};

/// Guard on `‖M‖·T` before exponentiating; beyond this the flow cannot be
/// represented in f64 anyway.
const MAX_EXPONENT_NORM: f64 = 600.0;

/// One local axis: `[z, z'](T) = e [z, z'](0) + g_const d0 + g_ramp d1`.
#[derive(Debug, Clone, Copy)]
struct AxisFlow {
    e: Matrix2<f64>,
    g_const: Vector2<f64>,
    g_ramp: Vector2<f64>,
}

impl AxisFlow {
    fn new(diverge: f64, damping: f64, duration: f64) -> Result<Self, ModelError> {
        #[rustfmt::skip]
        let m = Matrix4::new(
            0.0,     1.0,      0.0, 0.0,
            diverge, -damping, 0.0, 1.0,
            0.0,     0.0,      0.0, 0.0,
            0.0,     0.0,      1.0, 0.0,
        ) * duration;
        if !m.iter().all(|v| v.is_finite()) || m.norm() > MAX_EXPONENT_NORM {
            return Err(ModelError::NonFiniteResult);
        }
        let phi = m.exp();
        if !phi.iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFiniteResult);
        }
        Ok(Self {
            e: phi.fixed_view::<2, 2>(0, 0).into_owned(),
            g_ramp: phi.fixed_view::<2, 1>(0, 2).into_owned(),
            g_const: phi.fixed_view::<2, 1>(0, 3).into_owned(),
        })
    }
}

/// Two point masses joined by a spring/damper aligned with a heading; the robot
/// mass optionally rides an inverted pendulum over a stance foot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledModel {
    /// `ω₀²`; zero for the pure admittance model.
    pub omega_sq: f64,
    /// Spring per unit robot mass along the local axes, 1/s².
    pub stiffness: Vec2,
    /// Damper per unit robot mass along the local axes, 1/s.
    pub damping: Vec2,
    /// Heading of the spring frame.
    pub heading: f64,
    /// Spring natural length in the local frame.
    pub offset: Vec2,
}

/// World-frame affine step map `X⁺ = A X + B u + c` with `X = [x, y, ẋ, ẏ]`.
#[derive(Debug, Clone, Copy)]
pub struct AffineStep {
    pub state: Matrix4<f64>,
    pub foot: Matrix4x2<f64>,
    pub offset: Vector4<f64>,
}

impl AffineStep {
    pub fn apply(&self, robot: &PlanarState, foot: &Vec2) -> PlanarState {
        let x = stack(robot);
        let next = self.state * x + self.foot * foot + self.offset;
        unstack(&next)
    }
}

pub fn stack(s: &PlanarState) -> Vector4<f64> {
    Vector4::new(s.pos.x, s.pos.y, s.vel.x, s.vel.y)
}

pub fn unstack(v: &Vector4<f64>) -> PlanarState {
    PlanarState::new(Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3]))
}

impl CoupledModel {
    /// Acceleration of the robot mass at time `t` into the step.
    pub fn accel(&self, robot: &PlanarState, foot: &Vec2, object_start: &Vec2, object_vel: &Vec2, t: f64) -> Vec2 {
        let rot = HeadingRotation::new(self.heading);
        let object_pos = object_start + object_vel * t;
        let stretch = rot.to_local(&(object_pos - robot.pos)) - self.offset;
        let rate = rot.to_local(&(object_vel - robot.vel));
        let local = stretch.component_mul(&self.stiffness) + rate.component_mul(&self.damping);
        (robot.pos - foot) * self.omega_sq + rot.to_world(&local)
    }

    /// Affine form of the step map for a fixed object start position and velocity.
    pub fn affine_step(&self, object_start: &Vec2, object_vel: &Vec2, duration: f64) -> Result<AffineStep, ModelError> {
        let rot = HeadingRotation::new(self.heading);
        let ob = rot.to_local(object_start);
        let ov = rot.to_local(object_vel);

        let mut a_local = Matrix4::zeros();
        let mut b_local = Matrix4x2::zeros();
        let mut c_local = Vector4::zeros();
        for axis in 0..2 {
            let k = self.stiffness[axis];
            let b = self.damping[axis];
            let flow = AxisFlow::new(self.omega_sq - k, b, duration)?;
            // local ordering (z_x, z_y, ż_x, ż_y)
            let (ip, iv) = (axis, axis + 2);
            a_local[(ip, ip)] = flow.e[(0, 0)];
            a_local[(ip, iv)] = flow.e[(0, 1)];
            a_local[(iv, ip)] = flow.e[(1, 0)];
            a_local[(iv, iv)] = flow.e[(1, 1)];

            // the foot enters the constant forcing with coefficient -ω²
            let foot_gain = flow.g_const * (-self.omega_sq);
            b_local[(ip, axis)] = foot_gain[0];
            b_local[(iv, axis)] = foot_gain[1];

            let d0 = k * (ob[axis] - self.offset[axis]) + b * ov[axis];
            let d1 = k * ov[axis];
            let forced = flow.g_const * d0 + flow.g_ramp * d1;
            c_local[ip] = forced[0];
            c_local[iv] = forced[1];
        }

        let r = rot.matrix();
        let mut rb = Matrix4::zeros();
        rb.fixed_view_mut::<2, 2>(0, 0).copy_from(&r);
        rb.fixed_view_mut::<2, 2>(2, 2).copy_from(&r);
        let state = rb * a_local * rb.transpose();
        let foot = rb * b_local * r.transpose();
        Ok(AffineStep { state, foot, offset: rb * c_local })
    }
}
