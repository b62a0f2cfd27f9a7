//! Reduced interaction controller.
//!
//! Allocates robot CoM acceleration, object acceleration, object yaw
//! acceleration and the net hand wrench in one small QP:
//!
//! ```text
//! minimize    ψ2 |ẍc − a_c|² + ψ3 |ẍb − a_b|² + ψ4 (θ̈b − α_b)² + ψ7 |f|²
//! subject to  m_b ẍb + f = F_h
//!             I_bz θ̈b + m_z = M_h
//!             |f_i| ≤ f_max, |m_z| ≤ m_max, |ẍc_i| ≤ a_max
//! ```
//!
//! `f` is the planar force the object exerts on the hands (the hands push the
//! object with `−f`), `F_h` the leader's force on the object.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admittance::DesiredAccels;
use crate::error::ConfigError;
use crate::qp::{QpError, QpProblem, QpSettings, QpSolution, QpSolver, QpStatus};
use crate::state::{FootPose, Vec2};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum WbcError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("interaction QP not solved: {status:?} (KKT residual {residual:e})")]
    Infeasible { status: QpStatus, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WbcWeights {
    pub psi2: f64,
    pub psi3: f64,
    pub psi4: f64,
    pub psi7: f64,
}

impl Default for WbcWeights {
    fn default() -> Self {
        Self { psi2: 1.0, psi3: 1.0, psi4: 1.0, psi7: 1e-4 }
    }
}

impl WbcWeights {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if [self.psi2, self.psi3, self.psi4].iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(ConfigError::invalid("wbc weights", "psi2, psi3 and psi4 must be positive"));
        }
        if !(self.psi7 >= 0.0 && self.psi7.is_finite()) {
            return Err(ConfigError::invalid("wbc weights", "psi7 must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WbcBounds {
    /// Per-axis bound on the planar hand force, N.
    pub force: f64,
    /// Bound on the yaw moment, N·m.
    pub moment: f64,
    /// Per-axis bound on the commanded CoM acceleration, m/s².
    pub accel: f64,
}

impl Default for WbcBounds {
    fn default() -> Self {
        Self { force: 150.0, moment: 40.0, accel: 6.0 }
    }
}

impl WbcBounds {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if [self.force, self.moment, self.accel].iter().any(|b| !(*b >= 0.0)) {
            return Err(ConfigError::invalid("wbc bounds", "bounds must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HandWrench {
    /// Planar force the object exerts on the hands, N.
    pub f_xy: Vec2,
    /// Vertical support force, N.
    pub f_z: f64,
    /// Yaw moment the object exerts on the hands, N·m.
    pub m_z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WbcOutput {
    pub robot_accel: Vec2,
    pub object_accel: Vec2,
    pub object_yaw_accel: f64,
    pub wrench: HandWrench,
}

/// Leader wrench and desired accelerations for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionInput {
    pub hand_force: Vec2,
    pub hand_moment: f64,
    pub desired: DesiredAccels,
    pub object_mass: f64,
    /// Object yaw inertia, kg·m².
    pub inertia: f64,
    /// Vertical support force assigned to the robot, N.
    pub support: f64,
}

fn assemble(input: &InteractionInput, weights: &WbcWeights, bounds: &WbcBounds) -> QpProblem {
    let d = &input.desired;
    let diag = [weights.psi2, weights.psi2, weights.psi3, weights.psi3, weights.psi4, weights.psi7, weights.psi7, 0.0];
    let h = DMatrix::from_diagonal(&DVector::from_iterator(8, diag.iter().map(|w| 2.0 * w)));
    let target = [d.robot.x, d.robot.y, d.object.x, d.object.y, d.object_yaw, 0.0, 0.0, 0.0];
    let f = DVector::from_iterator(8, diag.iter().zip(target).map(|(w, a)| -2.0 * w * a));

    let m = input.object_mass;
    #[rustfmt::skip]
    let a_eq = DMatrix::from_row_slice(3, 8, &[
        0.0, 0.0, m,   0.0, 0.0,           1.0, 0.0, 0.0,
        0.0, 0.0, 0.0, m,   0.0,           0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 0.0, input.inertia, 0.0, 0.0, 1.0,
    ]);
    let b_eq = DVector::from_vec(vec![input.hand_force.x, input.hand_force.y, input.hand_moment]);

    let bounded = [(0, bounds.accel), (1, bounds.accel), (5, bounds.force), (6, bounds.force), (7, bounds.moment)];
    let mut a_in = DMatrix::zeros(bounded.len(), 8);
    let mut upper = DVector::zeros(bounded.len());
    for (r, (col, b)) in bounded.iter().enumerate() {
        a_in[(r, *col)] = 1.0;
        upper[r] = *b;
    }
    let lower = -&upper;
    QpProblem::new(h, f).with_equalities(a_eq, b_eq).with_inequalities(a_in, lower, upper)
}

fn unpack(x: &DVector<f64>, support: f64) -> WbcOutput {
    WbcOutput {
        robot_accel: Vec2::new(x[0], x[1]),
        object_accel: Vec2::new(x[2], x[3]),
        object_yaw_accel: x[4],
        wrench: HandWrench { f_xy: Vec2::new(x[5], x[6]), f_z: support, m_z: x[7] },
    }
}

/// One-shot solve without warm start.
pub fn solve_interaction_qp(input: &InteractionInput, weights: &WbcWeights, bounds: &WbcBounds) -> Result<WbcOutput, WbcError> {
    InteractionController::new(*weights, *bounds)?.solve(input)
}

/// Interaction QP with a warm-start cache, owned by one stepping context.
#[derive(Debug, Clone)]
pub struct InteractionController {
    pub weights: WbcWeights,
    pub bounds: WbcBounds,
    solver: QpSolver,
    warm: Option<QpSolution>,
}

impl InteractionController {
    pub fn new(weights: WbcWeights, bounds: WbcBounds) -> Result<Self, ConfigError> {
        weights.validate()?;
        bounds.validate()?;
        Ok(Self { weights, bounds, solver: QpSolver::new(QpSettings::default()), warm: None })
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    pub fn solve(&mut self, input: &InteractionInput) -> Result<WbcOutput, WbcError> {
        if !(input.inertia > 0.0 && input.object_mass > 0.0) {
            return Err(ConfigError::invalid("interaction QP", "object mass and inertia must be positive").into());
        }
        let problem = assemble(input, &self.weights, &self.bounds);
        let sol = self.solver.solve(&problem, self.warm.as_ref())?;
        if !sol.is_optimal() {
            return Err(WbcError::Infeasible { status: sol.status, residual: sol.kkt_residual });
        }
        let out = unpack(&sol.x, input.support);
        self.warm = Some(sol);
        Ok(out)
    }
}

/// Vertical support split `(robot, human)` for an object of mass `object_mass`.
pub fn vertical_load_share(object_mass: f64, gravity: f64, share: f64) -> Result<(f64, f64), ConfigError> {
    if !(0.0..=1.0).contains(&share) {
        return Err(ConfigError::invalid("load share", format!("share {share} outside [0, 1]")));
    }
    let weight = object_mass * gravity;
    Ok((share * weight, (1.0 - share) * weight))
}

/// Swing foot position at phase `s`: cosine blend in the plane and a quartic
/// bump of height `clearance` vertically.
pub fn swing_foot_position(start: &Vector3<f64>, target: &FootPose, s: f64, clearance: f64) -> Vector3<f64> {
    let s = s.clamp(0.0, 1.0);
    let blend = 0.5 * (1.0 - (std::f64::consts::PI * s).cos());
    let xy = start.xy() + (target.pos - start.xy()) * blend;
    let z = 16.0 * clearance * s * s * (1.0 - s) * (1.0 - s);
    Vector3::new(xy.x, xy.y, z)
}

/// Phase of the current step and whether it ends at `t_in_step`.
pub fn advance_phase(t_in_step: f64, step_duration: f64) -> (f64, bool) {
    let s = (t_in_step / step_duration).clamp(0.0, 1.0);
    // tick times are sums of dt, so allow for rounding at the boundary
    let strike = t_in_step >= step_duration * (1.0 - 1e-9);
    (s, strike)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::kkt_residuals;
    use crate::state::FootSide;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn input(force: Vec2, moment: f64, desired: DesiredAccels) -> InteractionInput {
        InteractionInput { hand_force: force, hand_moment: moment, desired, object_mass: 15.0, inertia: 0.6, support: 0.0 }
    }

    fn random_desired(rng: &mut ChaCha8Rng, scale: f64) -> DesiredAccels {
        DesiredAccels {
            robot: Vec2::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)),
            object: Vec2::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)),
            object_yaw: rng.random_range(-scale..scale),
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let out = solve_interaction_qp(&input(Vec2::zeros(), 0.0, DesiredAccels::default()), &WbcWeights::default(), &WbcBounds::default()).unwrap();
        assert_eq!(out.robot_accel.amax(), 0.0);
        assert_eq!(out.object_accel.amax(), 0.0);
        assert_eq!(out.wrench.f_xy.amax(), 0.0);
        assert_abs_diff_eq!(out.object_yaw_accel, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.wrench.m_z, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn unconstrained_solution_matches_eliminated_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let weights = WbcWeights {
                psi2: rng.random_range(0.1..5.0),
                psi3: rng.random_range(0.1..5.0),
                psi4: rng.random_range(0.1..5.0),
                psi7: rng.random_range(0.0..0.01),
            };
            let d = random_desired(&mut rng, 2.0);
            let fh = Vec2::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0));
            let mh = rng.random_range(-5.0..5.0);
            let inp = input(fh, mh, d);
            let out = solve_interaction_qp(&inp, &weights, &WbcBounds::default()).unwrap();
            // eliminating ẍb = (F_h − f)/m gives a scalar least squares per axis
            let m = inp.object_mass;
            let c = weights.psi3 / (m * m);
            for i in 0..2 {
                let f = c * (fh[i] - m * d.object[i]) / (c + weights.psi7);
                assert_abs_diff_eq!(out.wrench.f_xy[i], f, epsilon = 1e-7);
                assert_abs_diff_eq!(out.object_accel[i], (fh[i] - f) / m, epsilon = 1e-8);
                assert_abs_diff_eq!(out.robot_accel[i], d.robot[i], epsilon = 1e-8);
            }
            // the moment is free of cost, so yaw tracking is exact
            assert_abs_diff_eq!(out.object_yaw_accel, d.object_yaw, epsilon = 1e-8);
            assert_abs_diff_eq!(out.wrench.m_z, mh - inp.inertia * d.object_yaw, epsilon = 1e-8);
        }
    }

    #[test]
    fn excessive_demand_clamps_force() {
        let d = DesiredAccels { object: Vec2::new(-30.0, 0.0), ..Default::default() };
        let inp = input(Vec2::new(20.0, 0.0), 0.0, d);
        let out = solve_interaction_qp(&inp, &WbcWeights::default(), &WbcBounds::default()).unwrap();
        assert_abs_diff_eq!(out.wrench.f_xy.x, 150.0, epsilon = 1e-8);
        assert_abs_diff_eq!(out.object_accel.x, (20.0 - 150.0) / 15.0, epsilon = 1e-8);
    }

    #[test]
    fn robot_acceleration_is_bounded() {
        let d = DesiredAccels { robot: Vec2::new(10.0, -8.0), ..Default::default() };
        let out = solve_interaction_qp(&input(Vec2::zeros(), 0.0, d), &WbcWeights::default(), &WbcBounds::default()).unwrap();
        assert_abs_diff_eq!(out.robot_accel.x, 6.0, epsilon = 1e-8);
        assert_abs_diff_eq!(out.robot_accel.y, -6.0, epsilon = 1e-8);
    }

    #[test]
    fn dynamics_hold_on_random_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ctl = InteractionController::new(WbcWeights::default(), WbcBounds::default()).unwrap();
        for _ in 0..300 {
            let d = random_desired(&mut rng, 20.0);
            let fh = Vec2::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0));
            let mh = rng.random_range(-60.0..60.0);
            let inp = input(fh, mh, d);
            let out = ctl.solve(&inp).unwrap();
            let lin = out.object_accel * inp.object_mass + out.wrench.f_xy - fh;
            assert!(lin.amax() < 1e-8, "{lin:?}");
            assert!((inp.inertia * out.object_yaw_accel + out.wrench.m_z - mh).abs() < 1e-8);
            assert!(out.wrench.f_xy.amax() <= 150.0 + 1e-8);
            assert!(out.wrench.m_z.abs() <= 40.0 + 1e-8);
        }
    }

    #[test]
    fn force_weight_trades_tracking_for_effort() {
        let d = DesiredAccels { robot: Vec2::zeros(), object: Vec2::new(-1.5, 0.8), object_yaw: 0.0 };
        let inp = input(Vec2::new(30.0, -10.0), 0.0, d);
        let mut last: Option<(f64, f64)> = None;
        for psi7 in [0.0, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 1.0] {
            let w = WbcWeights { psi7, ..Default::default() };
            let out = solve_interaction_qp(&inp, &w, &WbcBounds::default()).unwrap();
            let err = (out.object_accel - d.object).norm();
            let force = out.wrench.f_xy.norm();
            if let Some((e0, f0)) = last {
                assert!(err >= e0 - 1e-10 && force <= f0 + 1e-10);
            }
            last = Some((err, force));
        }
    }

    #[test]
    fn warm_start_reuses_active_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ctl = InteractionController::new(WbcWeights::default(), WbcBounds::default()).unwrap();
        let d = random_desired(&mut rng, 5.0);
        let base = input(Vec2::new(120.0, 30.0), 3.0, d);
        for k in 0..50 {
            let mut inp = base;
            inp.hand_force.x += 0.01 * k as f64;
            let problem = assemble(&inp, &ctl.weights, &ctl.bounds);
            let cold = QpSolver::default().solve(&problem, None).unwrap();
            let warm = QpSolver::default().solve(&problem, ctl.warm.as_ref()).unwrap();
            assert!(warm.iterations <= cold.iterations);
            assert!(kkt_residuals(&problem, &warm.x, &warm.eq_dual, &warm.ineq_dual).max() < 1e-8);
            ctl.solve(&inp).unwrap();
        }
    }

    #[test]
    fn invalid_configuration_is_rejected() {
        assert!(InteractionController::new(WbcWeights { psi3: 0.0, ..Default::default() }, WbcBounds::default()).is_err());
        let mut inp = input(Vec2::zeros(), 0.0, DesiredAccels::default());
        inp.inertia = 0.0;
        assert!(matches!(solve_interaction_qp(&inp, &WbcWeights::default(), &WbcBounds::default()), Err(WbcError::Config(_))));
    }

    #[test]
    fn load_share_statics() {
        let (r, h) = vertical_load_share(15.0, 9.81, 0.5).unwrap();
        assert_abs_diff_eq!(r, 73.575, epsilon = 1e-12);
        assert_abs_diff_eq!(h, 73.575, epsilon = 1e-12);
        let (r, h) = vertical_load_share(15.0, 9.81, 1.0).unwrap();
        assert_eq!(h, 0.0);
        assert_abs_diff_eq!(r, 147.15, epsilon = 1e-12);
        let (r, h) = vertical_load_share(15.0, 9.81, 0.55).unwrap();
        assert_abs_diff_eq!(r, 0.55 * 15.0 * 9.81, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 80.93, epsilon = 5e-3);
        assert_abs_diff_eq!(r + h, 147.15, epsilon = 1e-12);
        assert!(vertical_load_share(15.0, 9.81, 1.2).is_err());
    }

    #[test]
    fn swing_trajectory_boundaries() {
        let start = Vector3::new(0.1, -0.2, 0.0);
        let target = FootPose::new(Vec2::new(0.4, 0.1), 0.0, FootSide::Left);
        let z_cl = 0.08;
        assert_eq!(swing_foot_position(&start, &target, 0.0, z_cl), start);
        let end = swing_foot_position(&start, &target, 1.0, z_cl);
        assert_abs_diff_eq!(end, Vector3::new(0.4, 0.1, 0.0), epsilon = 1e-15);
        let mid = swing_foot_position(&start, &target, 0.5, z_cl);
        assert_abs_diff_eq!(mid, Vector3::new(0.25, -0.05, z_cl), epsilon = 1e-15);
        let h = 1e-7;
        for s in [0.0, 1.0 - h] {
            let d = (swing_foot_position(&start, &target, s + h, z_cl) - swing_foot_position(&start, &target, s, z_cl)) / h;
            assert!(d.z.abs() < 1e-6, "vertical rate {}", d.z);
        }
        // C¹: finite-difference slopes from both sides agree across the interior
        for i in 1..100 {
            let s = i as f64 / 100.0;
            let left = (swing_foot_position(&start, &target, s, z_cl) - swing_foot_position(&start, &target, s - h, z_cl)) / h;
            let right = (swing_foot_position(&start, &target, s + h, z_cl) - swing_foot_position(&start, &target, s, z_cl)) / h;
            assert!((left - right).amax() < 1e-5);
        }
    }

    #[test]
    fn phase_examples() {
        assert_eq!(advance_phase(0.0, 0.4), (0.0, false));
        assert_eq!(advance_phase(0.4, 0.4), (1.0, true));
        assert_eq!(advance_phase(0.1, 0.4), (0.25, false));
        // 400 ticks of 1 ms accumulate rounding but still strike
        let t: f64 = (0..400).map(|_| 1e-3).sum();
        assert!(advance_phase(t, 0.4).1);
        assert!(!advance_phase(0.399, 0.4).1);
    }
}
