//! Receding-horizon footstep planner over the I-LIP step map.
//!
//! At a foot strike the robot stands on `u_{k-1}` for the coming step. The
//! planner predicts the state `X_k` at the next strike, then optimizes the
//! footholds `u_k … u_{k+N-1}` together with the strike states
//! `X_{k+1} … X_{k+N}`:
//!
//! ```text
//! variables   z = [X_{k+1}, u_k, X_{k+2}, u_{k+1}, …]      (6 per stage)
//! dynamics    X_{k+j+1} = A_j X_{k+j} + B_j u_{k+j} + c_j
//! cost        Σ φ1 |x_{k+j+1} − goal_j|²_{R K_Φ Rᵀ} + φ2 |x_{k+j+1} − u_{k+j}|²_{R B_Φ Rᵀ}
//! ```
//!
//! with `R = R(θ_j)` from the goal set headings. Only `steps[0]` is executed.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admittance::{build_goal_set, GoalSet, HeadingState};
use crate::error::{ConfigError, ModelError};
use crate::flow::stack;
use crate::ilip::{ilip_affine_step, object_step_map};
use crate::qp::{QpError, QpProblem, QpSettings, QpSolution, QpSolver, QpStatus};
use crate::state::{ComplianceParams, FootPose, GaitConfig, HeadingRotation, IntentEstimate, PlanarState, Vec2};

const STAGE: usize = 6;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlannerError {
    #[error("goal set has {got} stages, planner horizon is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("footstep QP not solved: {status:?} (KKT residual {residual:e})")]
    Infeasible { status: QpStatus, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcWeights {
    /// Goal tracking gains along the local axes.
    pub k_phi: Vec2,
    /// CoM-over-foot regulation gains along the local axes.
    pub b_phi: Vec2,
    pub phi1: f64,
    pub phi2: f64,
}

impl Default for MpcWeights {
    fn default() -> Self {
        Self { k_phi: Vec2::new(10.0, 10.0), b_phi: Vec2::new(1.0, 1.0), phi1: 1.0, phi2: 0.3 }
    }
}

impl MpcWeights {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let all = [self.k_phi.x, self.k_phi.y, self.b_phi.x, self.b_phi.y, self.phi1, self.phi2];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ConfigError::invalid("mpc weights", "weights must be finite and non-negative"));
        }
        if self.phi1 + self.phi2 <= 0.0 {
            return Err(ConfigError::invalid("mpc weights", "phi1 + phi2 must be positive"));
        }
        Ok(())
    }
}

/// Two two-sided rows `lower ≤ rows · (u − prev) ≤ upper`: forward reach along
/// the previous heading and lateral reach toward the swing side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleRegion {
    pub origin: Vec2,
    pub rows: Matrix2<f64>,
    pub lower: Vec2,
    pub upper: Vec2,
}

impl FeasibleRegion {
    /// Largest bound violation of `candidate`; non-positive inside the region.
    pub fn violation(&self, candidate: &Vec2) -> f64 {
        let v = self.rows * (candidate - self.origin);
        (0..2).map(|i| (self.lower[i] - v[i]).max(v[i] - self.upper[i])).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, candidate: &Vec2) -> bool {
        self.violation(candidate) <= 0.0
    }
}

/// Foothold constraints for the step after `prev`.
pub fn feasible_region(prev: &FootPose, cfg: &GaitConfig) -> FeasibleRegion {
    let (c, s) = (prev.heading.cos(), prev.heading.sin());
    let n = prev.side.lateral_sign();
    #[rustfmt::skip]
    let rows = Matrix2::new(
        c,      s,
        -n * s, n * c,
    );
    FeasibleRegion {
        origin: prev.pos,
        rows,
        lower: Vec2::new(-cfg.max_step_forward, cfg.foot_width),
        upper: Vec2::new(cfg.max_step_forward, cfg.max_step_lateral),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootPlan {
    /// Planned footholds `u_k … u_{k+N-1}`; the first one ends the current step.
    pub steps: Vec<FootPose>,
    /// Strike states `X_{k+1} … X_{k+N}`.
    pub predicted_com: Vec<PlanarState>,
    /// Predicted state at the end of the current step.
    pub predicted_strike: PlanarState,
    pub goals: GoalSet,
    pub qp_iterations: usize,
    pub kkt_residual: f64,
}

fn add_block(h: &mut DMatrix<f64>, r: usize, c: usize, m: &Matrix2<f64>) {
    for i in 0..2 {
        for j in 0..2 {
            h[(r + i, c + j)] += m[(i, j)];
        }
    }
}

/// Assemble the footstep QP. `robot` and `object` are the predicted states at
/// the next strike and `stance` is the foot the robot stands on until then.
/// The object is assumed to keep `object.vel` over the horizon.
pub fn assemble_mpc(
    robot: &PlanarState,
    object: &PlanarState,
    goals: &GoalSet,
    stance: &FootPose,
    params: &ComplianceParams,
    weights: &MpcWeights,
    cfg: &GaitConfig,
) -> Result<QpProblem, PlannerError> {
    let n = cfg.horizon;
    for got in [goals.com_goals.len(), goals.headings.len()] {
        if got != n {
            return Err(PlannerError::DimensionMismatch { expected: n, got });
        }
    }
    let nv = STAGE * n;
    let mut h = DMatrix::zeros(nv, nv);
    let mut f = DVector::zeros(nv);
    let mut a_eq = DMatrix::zeros(4 * n, nv);
    let mut b_eq = DVector::zeros(4 * n);
    let mut a_in = DMatrix::zeros(2 * n, nv);
    let mut lower = DVector::zeros(2 * n);
    let mut upper = DVector::zeros(2 * n);

    let mut object_state = *object;
    let mut prev_foot = *stance;
    for j in 0..n {
        let heading = goals.headings[j];
        let (ix, iu) = (STAGE * j, STAGE * j + 4);

        let step = ilip_affine_step(
            heading,
            &object_state.pos,
            &object_state.vel,
            &params.ilip_stiffness,
            &params.ilip_damping,
            &params.desired_offset,
            params.robot_mass,
            cfg,
        )?;
        object_state = object_step_map(&object_state, &object.vel, cfg.step_duration);

        // X_{j+1} − A X_j − B u_j = c
        let rows = 4 * j;
        for r in 0..4 {
            a_eq[(rows + r, ix + r)] = 1.0;
            for c in 0..2 {
                a_eq[(rows + r, iu + c)] = -step.foot[(r, c)];
            }
        }
        let mut rhs = step.offset;
        if j == 0 {
            rhs += step.state * stack(robot);
        } else {
            let prev_x = STAGE * (j - 1);
            for r in 0..4 {
                for c in 0..4 {
                    a_eq[(rows + r, prev_x + c)] = -step.state[(r, c)];
                }
            }
        }
        b_eq.rows_mut(rows, 4).copy_from(&rhs);

        let rot = HeadingRotation::new(heading);
        let q_goal = rot.rotate_diag(&weights.k_phi) * (2.0 * weights.phi1);
        let q_foot = rot.rotate_diag(&weights.b_phi) * (2.0 * weights.phi2);
        add_block(&mut h, ix, ix, &q_goal);
        let lin = -(q_goal * goals.com_goals[j]);
        f[ix] += lin.x;
        f[ix + 1] += lin.y;
        add_block(&mut h, ix, ix, &q_foot);
        add_block(&mut h, iu, iu, &q_foot);
        add_block(&mut h, ix, iu, &(-q_foot));
        add_block(&mut h, iu, ix, &(-q_foot));

        let region = feasible_region(&prev_foot, cfg);
        let rows = 2 * j;
        for r in 0..2 {
            a_in[(rows + r, iu)] = region.rows[(r, 0)];
            a_in[(rows + r, iu + 1)] = region.rows[(r, 1)];
        }
        if j == 0 {
            let shift = region.rows * stance.pos;
            lower.rows_mut(rows, 2).copy_from(&(region.lower + shift));
            upper.rows_mut(rows, 2).copy_from(&(region.upper + shift));
        } else {
            let prev_u = STAGE * (j - 1) + 4;
            for r in 0..2 {
                a_in[(rows + r, prev_u)] = -region.rows[(r, 0)];
                a_in[(rows + r, prev_u + 1)] = -region.rows[(r, 1)];
            }
            lower.rows_mut(rows, 2).copy_from(&region.lower);
            upper.rows_mut(rows, 2).copy_from(&region.upper);
        }
        // only heading and side of the previous foot matter for chained rows
        prev_foot = FootPose::new(Vec2::zeros(), heading, prev_foot.side.other());
    }

    // symmetrize away rounding from the rotated blocks
    let h = (&h + h.transpose()) * 0.5;
    Ok(QpProblem::new(h, f).with_equalities(a_eq, b_eq).with_inequalities(a_in, lower, upper))
}

fn extract_plan(sol: &QpSolution, stance: &FootPose, goals: &GoalSet, predicted_strike: PlanarState, horizon: usize) -> FootPlan {
    let mut steps = Vec::with_capacity(horizon);
    let mut predicted_com = Vec::with_capacity(horizon);
    let mut side = stance.side;
    for j in 0..horizon {
        let b = STAGE * j;
        predicted_com.push(PlanarState::new(Vec2::new(sol.x[b], sol.x[b + 1]), Vec2::new(sol.x[b + 2], sol.x[b + 3])));
        side = side.other();
        steps.push(FootPose::new(Vector2::new(sol.x[b + 4], sol.x[b + 5]), goals.headings[j], side));
    }
    FootPlan { steps, predicted_com, predicted_strike, goals: goals.clone(), qp_iterations: sol.iterations, kkt_residual: sol.kkt_residual }
}

/// Solve an assembled footstep problem without warm start.
pub fn solve_footstep_plan(
    robot: &PlanarState,
    object: &PlanarState,
    goals: &GoalSet,
    stance: &FootPose,
    params: &ComplianceParams,
    weights: &MpcWeights,
    cfg: &GaitConfig,
) -> Result<FootPlan, PlannerError> {
    FootstepPlanner::new(*weights).solve(robot, object, goals, stance, params, cfg)
}

/// Stateful planner that warm-starts each solve from the previous plan.
#[derive(Debug, Clone)]
pub struct FootstepPlanner {
    pub weights: MpcWeights,
    solver: QpSolver,
    warm: Option<QpSolution>,
}

/// Everything the planner needs at a foot strike.
#[derive(Debug, Clone, Copy)]
pub struct StrikeContext<'a> {
    /// Robot CoM state at the strike.
    pub robot: &'a PlanarState,
    /// Object state at the strike.
    pub object: &'a PlanarState,
    pub intent: &'a IntentEstimate,
    /// Foot that just landed and carries the coming step.
    pub stance: &'a FootPose,
    /// Heading profile state carried over from the previous plan.
    pub heading: HeadingState,
    pub params: &'a ComplianceParams,
    pub cfg: &'a GaitConfig,
}

impl FootstepPlanner {
    pub fn new(weights: MpcWeights) -> Self {
        Self { weights, solver: QpSolver::new(QpSettings::default()), warm: None }
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    /// Predict the next strike, build the goal set and solve.
    pub fn plan(&mut self, ctx: StrikeContext<'_>) -> Result<FootPlan, PlannerError> {
        let cfg = ctx.cfg;
        let params = ctx.params;
        let step = ilip_affine_step(
            ctx.stance.heading,
            &ctx.object.pos,
            &ctx.intent.velocity,
            &params.ilip_stiffness,
            &params.ilip_damping,
            &params.desired_offset,
            params.robot_mass,
            cfg,
        )?;
        let robot_next = step.apply(ctx.robot, &ctx.stance.pos);
        if !robot_next.is_finite() {
            return Err(ModelError::NonFiniteResult.into());
        }
        let object_next = object_step_map(&PlanarState::new(ctx.object.pos, ctx.intent.velocity), &ctx.intent.velocity, cfg.step_duration);
        // goals start from the predicted strike position moving with the intent
        let seed = PlanarState::new(robot_next.pos, ctx.intent.velocity);
        let goals = build_goal_set(&seed, &object_next, ctx.intent, ctx.heading, params, cfg)?;
        self.solve(&robot_next, &object_next, &goals, ctx.stance, params, cfg)
    }

    /// Solve for given predicted strike states and goals.
    pub fn solve(
        &mut self,
        robot: &PlanarState,
        object: &PlanarState,
        goals: &GoalSet,
        stance: &FootPose,
        params: &ComplianceParams,
        cfg: &GaitConfig,
    ) -> Result<FootPlan, PlannerError> {
        let problem = assemble_mpc(robot, object, goals, stance, params, &self.weights, cfg)?;
        let sol = self.solver.solve(&problem, self.warm.as_ref())?;
        if !sol.is_optimal() {
            return Err(PlannerError::Infeasible { status: sol.status, residual: sol.kkt_residual });
        }
        let plan = extract_plan(&sol, stance, goals, *robot, cfg.horizon);
        self.warm = Some(sol);
        Ok(plan)
    }
}

#[cfg(test)]
mod tests;
