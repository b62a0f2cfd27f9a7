use super::*;
use crate::ilip::{ilip_step_map, IlipStepInput};
use crate::qp::kkt_residuals;
use crate::FootSide;
use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn at_rest_intent() -> IntentEstimate {
    IntentEstimate::new(Vec2::zeros(), 0.0, 0.2, 0.2).unwrap()
}

fn stage_goals(goal: Vec2, heading: f64, n: usize) -> GoalSet {
    GoalSet { com_goals: vec![goal; n], headings: vec![heading; n], heading_rates: vec![0.0; n] }
}

#[test]
fn feasible_region_examples() {
    let cfg = GaitConfig::default();
    let right = FootPose::new(Vec2::zeros(), 0.0, FootSide::Right);
    let region = feasible_region(&right, &cfg);
    assert!(region.contains(&Vec2::new(0.2, 0.15)));
    assert!(!region.contains(&Vec2::zeros()));
    assert_abs_diff_eq!(region.violation(&Vec2::zeros()), cfg.foot_width, epsilon = 1e-12);
    assert!(!region.contains(&Vec2::new(cfg.max_step_forward + 0.01, 0.2)));
    // a left stance foot swings to its right
    let left = FootPose::new(Vec2::zeros(), 0.0, FootSide::Left);
    assert!(feasible_region(&left, &cfg).contains(&Vec2::new(0.2, -0.15)));
    assert!(!feasible_region(&left, &cfg).contains(&Vec2::new(0.2, 0.15)));
}

#[test]
fn feasible_region_rotates_with_heading() {
    let cfg = GaitConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let theta = rng.random_range(-3.0..3.0);
        let origin = Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let prev = FootPose::new(origin, theta, FootSide::Right);
        let local = Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.1..0.5));
        let world = origin + HeadingRotation::new(theta).to_world(&local);
        let inside = local.x.abs() <= cfg.max_step_forward && local.y >= cfg.foot_width && local.y <= cfg.max_step_lateral;
        assert_eq!(feasible_region(&prev, &cfg).contains(&world), inside);
    }
}

#[test]
fn single_stage_problem_has_six_variables() {
    let cfg = GaitConfig { horizon: 1, ..Default::default() };
    let params = ComplianceParams::default();
    let stance = FootPose::new(Vec2::zeros(), 0.0, FootSide::Left);
    let object = PlanarState::at_rest(params.desired_offset);
    let p = assemble_mpc(&PlanarState::default(), &object, &stage_goals(Vec2::zeros(), 0.0, 1), &stance, &params, &MpcWeights::default(), &cfg).unwrap();
    assert_eq!(p.num_vars(), 6);
    assert_eq!(p.num_eq(), 4);
    assert_eq!(p.num_ineq(), 2);
}

#[test]
fn horizon_mismatch_is_rejected() {
    let cfg = GaitConfig::default();
    let params = ComplianceParams::default();
    let stance = FootPose::new(Vec2::zeros(), 0.0, FootSide::Left);
    let err =
        assemble_mpc(&PlanarState::default(), &PlanarState::default(), &stage_goals(Vec2::zeros(), 0.0, 2), &stance, &params, &MpcWeights::default(), &cfg);
    assert_eq!(err.unwrap_err(), PlannerError::DimensionMismatch { expected: 3, got: 2 });
}

#[test]
fn hessian_is_psd_for_any_nonnegative_weights() {
    let cfg = GaitConfig { horizon: 4, ..Default::default() };
    let params = ComplianceParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let weights = MpcWeights {
            k_phi: Vec2::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)),
            b_phi: Vec2::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)),
            phi1: rng.random_range(0.0..5.0),
            phi2: rng.random_range(0.0..5.0),
        };
        let goals = GoalSet {
            com_goals: (0..4).map(|_| Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect(),
            headings: (0..4).map(|_| rng.random_range(-3.0..3.0)).collect(),
            heading_rates: vec![0.0; 4],
        };
        let stance = FootPose::new(Vec2::zeros(), goals.headings[0], FootSide::Right);
        let p = assemble_mpc(&PlanarState::default(), &PlanarState::at_rest(Vec2::new(0.6, 0.0)), &goals, &stance, &params, &weights, &cfg).unwrap();
        let eig = p.hessian.clone().symmetric_eigenvalues();
        assert!(eig.min() >= -1e-9, "min eigenvalue {}", eig.min());
    }
}

#[test]
fn equality_rows_reproduce_step_map() {
    let cfg = GaitConfig::default();
    let params = ComplianceParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let robot = PlanarState::new(
            Vec2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)),
            Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
        );
        let object = PlanarState::new(Vec2::new(0.6, rng.random_range(-0.2..0.2)), Vec2::new(rng.random_range(0.0..0.6), 0.0));
        let goals = GoalSet { com_goals: vec![Vec2::zeros(); 3], headings: (0..3).map(|_| rng.random_range(-0.5..0.5)).collect(), heading_rates: vec![0.0; 3] };
        let stance = FootPose::new(Vec2::new(0.0, 0.1), 0.0, FootSide::Left);
        let p = assemble_mpc(&robot, &object, &goals, &stance, &params, &MpcWeights::default(), &cfg).unwrap();

        let mut z = DVector::zeros(18);
        let mut state = robot;
        let mut obj = object;
        for j in 0..3 {
            let u = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let input = IlipStepInput {
                robot: state,
                object_pos: obj.pos,
                object_vel: object.vel,
                foot: FootPose::new(u, goals.headings[j], FootSide::Left),
                stiffness: params.ilip_stiffness,
                damping: params.ilip_damping,
                duration: cfg.step_duration,
            };
            state = ilip_step_map(&input, &params.desired_offset, params.robot_mass, &cfg).unwrap();
            obj = object_step_map(&obj, &object.vel, cfg.step_duration);
            z.rows_mut(6 * j, 4).copy_from(&stack(&state));
            z[6 * j + 4] = u.x;
            z[6 * j + 5] = u.y;
        }
        let residual = (&p.eq_matrix * &z - &p.eq_rhs).amax();
        assert!(residual < 1e-10, "residual {residual:e}");
    }
}

#[test]
fn in_place_plan_alternates_without_progress() {
    let cfg = GaitConfig::default();
    let params = ComplianceParams::default();
    let stance = FootPose::new(Vec2::zeros(), 0.0, FootSide::Left);
    let robot = PlanarState::default();
    let object = PlanarState::at_rest(params.desired_offset);
    let goals = build_goal_set(&robot, &object, &at_rest_intent(), HeadingState::default(), &params, &cfg).unwrap();
    let plan = solve_footstep_plan(&robot, &object, &goals, &stance, &params, &MpcWeights::default(), &cfg).unwrap();
    let mut prev = stance;
    for step in &plan.steps {
        assert_ne!(step.side, prev.side);
        assert!((step.pos.x - prev.pos.x).abs() < 1e-3, "forward progress {}", step.pos.x - prev.pos.x);
        assert!(((step.pos.y - prev.pos.y) * prev.side.lateral_sign()) >= cfg.foot_width - 1e-6);
        prev = *step;
    }
}

#[test]
fn far_goal_saturates_forward_bound() {
    let cfg = GaitConfig::default();
    let params = ComplianceParams::default();
    let stance = FootPose::new(Vec2::zeros(), 0.0, FootSide::Right);
    let goals = stage_goals(Vec2::new(10.0, 0.0), 0.0, cfg.horizon);
    let object = PlanarState::at_rest(params.desired_offset);
    let plan = solve_footstep_plan(&PlanarState::default(), &object, &goals, &stance, &params, &MpcWeights::default(), &cfg).unwrap();
    // the CoM diverges away from its stance foot, so reaching far ahead means
    // pushing off the rear edge of the forward row
    assert_abs_diff_eq!(plan.steps[0].pos.x, -cfg.max_step_forward, epsilon = 1e-8);
    let behind = plan.predicted_com[0].pos.x;
    let mut forward_goals = goals.clone();
    forward_goals.com_goals = vec![Vec2::new(-10.0, 0.0); cfg.horizon];
    let mirrored = solve_footstep_plan(&PlanarState::default(), &object, &forward_goals, &stance, &params, &MpcWeights::default(), &cfg).unwrap();
    assert_abs_diff_eq!(mirrored.steps[0].pos.x, cfg.max_step_forward, epsilon = 1e-8);
    assert!(behind > mirrored.predicted_com[0].pos.x);
}

#[test]
fn footholds_respect_chained_regions() {
    let cfg = GaitConfig { horizon: 5, ..Default::default() };
    let params = ComplianceParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..30 {
        let heading = rng.random_range(-3.0..3.0);
        let stance = FootPose::new(Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)), heading, FootSide::Left);
        let goals = GoalSet {
            com_goals: (0..5).map(|_| Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))).collect(),
            headings: (0..5).map(|i| heading + 0.1 * i as f64).collect(),
            heading_rates: vec![0.0; 5],
        };
        let robot = PlanarState::at_rest(stance.pos);
        let object = PlanarState::at_rest(stance.pos + Vec2::new(0.6, 0.0));
        let plan = solve_footstep_plan(&robot, &object, &goals, &stance, &params, &MpcWeights::default(), &cfg).unwrap();
        let mut prev = stance;
        for step in &plan.steps {
            assert_ne!(step.side, prev.side);
            assert!(feasible_region(&prev, &cfg).violation(&step.pos) < 1e-6);
            prev = *step;
        }
    }
}

/// Exhaustive 2 mm search over the foothold rectangle for a single-stage plan.
/// The step map is affine in the foothold, so three evaluations of the
/// analytic map give the end state for every grid point.
fn grid_search(
    robot: &PlanarState,
    object: &PlanarState,
    goals: &GoalSet,
    stance: &FootPose,
    params: &ComplianceParams,
    weights: &MpcWeights,
    cfg: &GaitConfig,
) -> Vec2 {
    let heading = goals.headings[0];
    let end = |u: Vec2| {
        let input = IlipStepInput {
            robot: *robot,
            object_pos: object.pos,
            object_vel: object.vel,
            foot: FootPose::new(u, heading, FootSide::Left),
            stiffness: params.ilip_stiffness,
            damping: params.ilip_damping,
            duration: cfg.step_duration,
        };
        ilip_step_map(&input, &params.desired_offset, params.robot_mass, cfg).unwrap().pos
    };
    let base = end(Vec2::zeros());
    let gx = end(Vec2::new(1.0, 0.0)) - base;
    let gy = end(Vec2::new(0.0, 1.0)) - base;
    let probe = Vec2::new(0.3, -0.7);
    assert!((end(probe) - (base + gx * probe.x + gy * probe.y)).norm() < 1e-9);

    let rot = HeadingRotation::new(heading);
    let cost = |u: Vec2| {
        let x = base + gx * u.x + gy * u.y;
        let e1 = rot.to_local(&(x - goals.com_goals[0]));
        let e2 = rot.to_local(&(x - u));
        weights.phi1 * (weights.k_phi.x * e1.x * e1.x + weights.k_phi.y * e1.y * e1.y)
            + weights.phi2 * (weights.b_phi.x * e2.x * e2.x + weights.b_phi.y * e2.y * e2.y)
    };
    let srot = stance.rotation();
    let n = stance.side.lateral_sign();
    let h = 0.002;
    let nf = (2.0 * cfg.max_step_forward / h).round() as i32;
    let nl = ((cfg.max_step_lateral - cfg.foot_width) / h).round() as i32;
    let mut best = (f64::INFINITY, Vec2::zeros());
    for i in 0..=nf {
        for j in 0..=nl {
            let local = Vec2::new(-cfg.max_step_forward + h * i as f64, n * (cfg.foot_width + h * j as f64));
            let u = stance.pos + srot.to_world(&local);
            let c = cost(u);
            if c < best.0 {
                best = (c, u);
            }
        }
    }
    best.1
}

#[test]
fn single_stage_matches_grid_search() {
    let cfg = GaitConfig { horizon: 1, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..50 {
        let params = ComplianceParams { ilip_stiffness: Vec2::new(rng.random_range(20.0..300.0), rng.random_range(20.0..300.0)), ..Default::default() };
        let weights = MpcWeights {
            k_phi: Vec2::new(rng.random_range(1.0..20.0), rng.random_range(1.0..20.0)),
            b_phi: Vec2::new(rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)),
            phi1: 1.0,
            phi2: rng.random_range(0.1..1.0),
        };
        let heading = rng.random_range(-3.0..3.0);
        let side = if rng.random_bool(0.5) { FootSide::Left } else { FootSide::Right };
        let stance = FootPose::new(Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)), heading, side);
        let robot = PlanarState::new(
            stance.pos + Vec2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)),
            Vec2::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)),
        );
        let object = PlanarState::new(robot.pos + Vec2::new(0.6, 0.0), Vec2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)));
        let goal = robot.pos + Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let goals = stage_goals(goal, heading + rng.random_range(-0.2..0.2), 1);

        let plan = solve_footstep_plan(&robot, &object, &goals, &stance, &params, &weights, &cfg).unwrap();
        let oracle = grid_search(&robot, &object, &goals, &stance, &params, &weights, &cfg);
        let diff = stance.rotation().to_local(&(plan.steps[0].pos - oracle));
        assert!(diff.x.abs() <= 0.002 + 1e-9 && diff.y.abs() <= 0.002 + 1e-9, "case {case}: {diff:?}");
    }
}

/// Closed-loop in-place stepping on the exact step map; returns the plan made at
/// every strike.
fn in_place_trace(strikes: usize) -> Vec<FootPlan> {
    let cfg = GaitConfig::default();
    // lateral spring stiff enough that the in-place gait settles into a
    // two-step cycle; with a soft spring it keeps a slow six-step sway
    let params = ComplianceParams { ilip_stiffness: Vec2::new(100.0, 800.0), ..Default::default() };
    let intent = at_rest_intent();
    let object = PlanarState::at_rest(params.desired_offset);
    let mut robot = PlanarState::default();
    let mut stance = FootPose::new(Vec2::new(0.0, 0.0), 0.0, FootSide::Left);
    let mut heading = HeadingState::default();
    let mut planner = FootstepPlanner::new(MpcWeights::default());
    let mut plans = Vec::with_capacity(strikes);
    for k in 0..strikes {
        let ctx = StrikeContext { robot: &robot, object: &object, intent: &intent, stance: &stance, heading, params: &params, cfg: &cfg };
        let cold = FootstepPlanner::new(MpcWeights::default()).plan(ctx).unwrap();
        let plan = planner.plan(ctx).unwrap();
        assert!(plan.qp_iterations <= cold.qp_iterations, "strike {k}: warm {} > cold {}", plan.qp_iterations, cold.qp_iterations);
        assert!((plan.steps[0].pos - cold.steps[0].pos).norm() < 1e-7);
        robot = plan.predicted_strike;
        stance = plan.steps[0];
        heading = HeadingState { angle: plan.goals.headings[0], rate: plan.goals.heading_rates[0] };
        plans.push(plan);
    }
    plans
}

#[test]
fn converged_in_place_plans_repeat_every_stride() {
    let plans = in_place_trace(120);
    for k in 100..118 {
        for j in 0..plans[k].steps.len() {
            let d = (plans[k].steps[j].pos - plans[k + 2].steps[j].pos).norm();
            assert!(d < 1e-4, "strike {k}, step {j}: {d:e}");
        }
    }
}

#[test]
#[ignore = "without a terminal cost a finite-horizon plan is not shift-consistent; overlap stays ~3 mm"]
fn consecutive_plans_agree_on_overlap() {
    let plans = in_place_trace(120);
    for k in 100..119 {
        for j in 0..plans[k].steps.len() - 1 {
            let d = (plans[k].steps[j + 1].pos - plans[k + 1].steps[j].pos).norm();
            assert!(d < 1e-4, "strike {k}, step {j}: {d:e}");
        }
    }
}

#[test]
fn assembled_problem_solution_satisfies_kkt() {
    let cfg = GaitConfig::default();
    let params = ComplianceParams::default();
    let stance = FootPose::new(Vec2::zeros(), 0.3, FootSide::Right);
    let goals = stage_goals(Vec2::new(1.0, 0.5), 0.3, 3);
    let robot = PlanarState::new(Vec2::new(0.02, 0.0), Vec2::new(0.2, 0.0));
    let object = PlanarState::new(Vec2::new(0.6, 0.0), Vec2::new(0.3, 0.1));
    let p = assemble_mpc(&robot, &object, &goals, &stance, &params, &MpcWeights::default(), &cfg).unwrap();
    let sol = QpSolver::default().solve(&p, None).unwrap();
    assert!(sol.is_optimal());
    assert!(kkt_residuals(&p, &sol.x, &sol.eq_dual, &sol.ineq_dual).max() < 1e-8);
}
