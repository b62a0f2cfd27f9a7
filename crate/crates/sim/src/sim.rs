//! Fixed-step plant and the per-tick control loop.
//!
//! The robot CoM is a linear inverted pendulum over the stance foot, pushed by
//! the reaction of the hand force; the object is a point mass with yaw driven
//! by the leader wrench and the hand wrench. Each tick runs, in order: leader,
//! intent estimate, hand admittance, interaction QP, semi-implicit Euler,
//! stiffness modulation, phase advance (replanning at a strike) and logging.

use cotransport_core::admittance::{desired_accels, HeadingState};
use cotransport_core::ilip::update_intent;
use cotransport_core::metrics::modified_capture_point_offset;
use cotransport_core::mpc::{FootPlan, FootstepPlanner, MpcWeights, PlannerError, StrikeContext};
use cotransport_core::stiffness::{update_stiffness, ModulationGains};
use cotransport_core::wbc::{
    advance_phase, swing_foot_position, vertical_load_share, InteractionController, InteractionInput, WbcBounds, WbcError, WbcOutput, WbcWeights,
};
use cotransport_core::{ComplianceParams, ConfigError, FootPose, FootSide, GaitConfig, IntentEstimate, PlanarState, Vec2};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::leader::{Leader, LeaderModel, Reference};
use crate::log::{PlanRecord, TickRecord};
use crate::scenario::{ComplianceCase, Scenario};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Fault {
    #[error("planner: {0}")]
    Planner(#[from] PlannerError),
    #[error("interaction QP: {0}")]
    Wbc(#[from] WbcError),
    #[error("state diverged")]
    NonFinite,
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("tick {tick}: {fault}")]
pub struct SimError {
    pub tick: u64,
    pub fault: Fault,
}

/// Everything about a run that is not in the scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub gait: GaitConfig,
    /// Base parameters; the case presets replace the planner and hand levels.
    pub params: ComplianceParams,
    pub mpc: MpcWeights,
    pub wbc: WbcWeights,
    pub bounds: WbcBounds,
    pub modulation: ModulationGains,
    pub intent_alpha: f64,
    pub intent_beta: f64,
    /// Object yaw inertia, kg·m².
    pub object_inertia: f64,
    /// Fraction of the object weight carried by the robot.
    pub load_share: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            gait: GaitConfig::default(),
            params: ComplianceParams::default(),
            mpc: MpcWeights::default(),
            wbc: WbcWeights::default(),
            bounds: WbcBounds::default(),
            // per-tick increments: the module gains read as rates per second
            modulation: ModulationGains { k_x1: 0.02, b_x1: 0.005, ..ModulationGains::default() },
            intent_alpha: 0.99,
            intent_beta: 0.995,
            object_inertia: 0.6,
            load_share: 0.55,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.gait.validate()?;
        self.params.validate()?;
        self.mpc.validate()?;
        self.wbc.validate()?;
        self.bounds.validate()?;
        self.modulation.validate()?;
        IntentEstimate::new(Vec2::zeros(), 0.0, self.intent_alpha, self.intent_beta)?;
        if !(self.object_inertia > 0.0) {
            return Err(ConfigError::invalid("sim", "object inertia must be positive"));
        }
        vertical_load_share(self.params.object_mass, self.gait.gravity, self.load_share)?;
        Ok(())
    }
}

/// Leader wrench supplied from outside (live console).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LeaderInput {
    pub f_x: f64,
    pub f_y: f64,
    pub m_z: f64,
}

/// Complete mutable state of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimState {
    pub tick: u64,
    pub robot: PlanarState,
    pub object: PlanarState,
    pub object_yaw: f64,
    pub object_yaw_rate: f64,
    pub stance: FootPose,
    pub swing_start: Vector3<f64>,
    pub swing_target: FootPose,
    pub swing: Vector3<f64>,
    /// Ticks elapsed in the current step.
    pub step_tick: u64,
    pub heading: HeadingState,
    pub intent: IntentEstimate,
    /// Modulated I-LIP forward spring, N/m.
    pub k_x: f64,
    pub case: ComplianceCase,
    pub pending_case: Option<ComplianceCase>,
    pub strikes: u64,
}

impl SimState {
    /// Standing start: feet `foot_width` apart under the CoM, the object at the
    /// desired offset ahead, left foot in stance.
    pub fn initial(cfg: &SimConfig, case: ComplianceCase) -> Self {
        let half = cfg.gait.foot_width / 2.0;
        let stance = FootPose::new(Vec2::new(0.0, half), 0.0, FootSide::Left);
        let swing = Vector3::new(0.0, -half, 0.0);
        Self {
            tick: 0,
            robot: PlanarState::default(),
            object: PlanarState::at_rest(cfg.params.desired_offset),
            object_yaw: 0.0,
            object_yaw_rate: 0.0,
            stance,
            swing_start: swing,
            swing_target: FootPose::new(swing.xy(), 0.0, FootSide::Right),
            swing,
            step_tick: 0,
            heading: HeadingState { angle: 0.0, rate: 0.0 },
            intent: IntentEstimate { velocity: Vec2::zeros(), yaw: 0.0, alpha: cfg.intent_alpha, beta: cfg.intent_beta },
            k_x: case.presets().1.stiffness.x,
            case,
            pending_case: None,
            strikes: 0,
        }
    }

    pub fn time(&self, dt: f64) -> f64 {
        self.tick as f64 * dt
    }

    /// Object offset from the robot CoM in the stance frame.
    pub fn separation(&self) -> Vec2 {
        self.stance.rotation().to_local(&(self.object.pos - self.robot.pos))
    }
}

/// A running simulation: state, controllers and the leader script.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub cfg: SimConfig,
    pub state: SimState,
    leader: Leader,
    planner: FootstepPlanner,
    wbc: InteractionController,
    support: (f64, f64),
}

/// Output of one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Tick {
    pub record: TickRecord,
    pub plan: Option<PlanRecord>,
}

impl Simulation {
    pub fn new(scenario: &Scenario, cfg: SimConfig) -> Result<Self, ConfigError> {
        Self::with_state(scenario, cfg, SimState::initial(&cfg, scenario.case))
    }

    /// Start from an explicit state; the leader reference is anchored at its
    /// object pose.
    pub fn with_state(scenario: &Scenario, cfg: SimConfig, state: SimState) -> Result<Self, ConfigError> {
        cfg.validate()?;
        scenario.leader_model.validate()?;
        let reference = Reference::new(scenario.leader.clone(), state.object.pos, state.object_yaw);
        Ok(Self {
            leader: Leader::new(scenario.leader_model, reference, scenario.seed),
            planner: FootstepPlanner::new(cfg.mpc),
            wbc: InteractionController::new(cfg.wbc, cfg.bounds)?,
            support: vertical_load_share(cfg.params.object_mass, cfg.gait.gravity, cfg.load_share)?,
            cfg,
            state,
        })
    }

    pub fn leader_model(&self) -> &LeaderModel {
        &self.leader.model
    }

    pub fn reference(&self) -> &Reference {
        &self.leader.reference
    }

    pub fn time(&self) -> f64 {
        self.state.time(self.cfg.gait.dt)
    }

    /// Compliance parameters in force. The I-LIP coupling models the hands, so
    /// it takes the hand spring and damper, with the modulated forward spring.
    pub fn params(&self) -> ComplianceParams {
        case_params(&self.cfg.params, self.state.case, self.state.k_x)
    }

    /// Request a compliance case; it takes effect at the next foot strike.
    pub fn set_case(&mut self, case: ComplianceCase) {
        self.state.pending_case = Some(case);
    }

    /// Plan the first swing from the current stance. Call once before stepping.
    pub fn start(&mut self) -> Result<PlanRecord, SimError> {
        self.replan()
    }

    fn replan(&mut self) -> Result<PlanRecord, SimError> {
        let params = self.params();
        let s = &self.state;
        let plan = self
            .planner
            .plan(StrikeContext {
                robot: &s.robot,
                object: &s.object,
                intent: &s.intent,
                stance: &s.stance,
                heading: s.heading,
                params: &params,
                cfg: &self.cfg.gait,
            })
            .map_err(|e| SimError { tick: s.tick, fault: e.into() })?;
        self.apply_plan(&plan);
        Ok(PlanRecord { tick: self.state.tick, t: self.time(), plan })
    }

    fn apply_plan(&mut self, plan: &FootPlan) {
        self.state.swing_target = plan.steps[0];
        self.state.heading = HeadingState { angle: plan.goals.headings[0], rate: plan.goals.heading_rates[0] };
    }

    /// Advance one tick. `input` replaces the scripted leader when present and
    /// is saturated to the leader limits.
    pub fn step(&mut self, input: Option<LeaderInput>) -> Result<Tick, SimError> {
        let dt = self.cfg.gait.dt;
        let t = self.time();
        let tick = self.state.tick;
        let fail = |fault: Fault| SimError { tick, fault };

        let s = &self.state;
        let (hand_force, hand_moment) = match input {
            Some(i) => self.leader.model.saturate(Vec2::new(i.f_x, i.f_y), i.m_z),
            None => self.leader.wrench(t, &s.object.pos, &s.object.vel, s.object_yaw, s.object_yaw_rate),
        };

        let intent = update_intent(&s.intent, &s.object.vel, s.object_yaw);
        let params = self.params();
        let mut desired = desired_accels(&s.robot, &s.object, s.object_yaw, s.object_yaw_rate, s.stance.heading, &hand_force, &params);
        // the leader moment enters the yaw objective as the leader force enters the object one
        desired.object_yaw += hand_moment / self.cfg.object_inertia;
        let out: WbcOutput = self
            .wbc
            .solve(&InteractionInput {
                hand_force,
                hand_moment,
                desired,
                object_mass: params.object_mass,
                inertia: self.cfg.object_inertia,
                support: self.support.0,
            })
            .map_err(|e| fail(e.into()))?;

        let s = &mut self.state;
        s.intent = intent;
        let w2 = self.cfg.gait.omega0().powi(2);
        let robot_accel = (s.robot.pos - s.stance.pos) * w2 + out.wrench.f_xy / params.robot_mass;
        s.robot.vel += robot_accel * dt;
        s.robot.pos += s.robot.vel * dt;
        s.object.vel += out.object_accel * dt;
        s.object.pos += s.object.vel * dt;
        s.object_yaw_rate += out.object_yaw_accel * dt;
        s.object_yaw += s.object_yaw_rate * dt;
        if !(s.robot.is_finite() && s.object.is_finite() && s.object_yaw.is_finite()) {
            return Err(fail(Fault::NonFinite));
        }

        s.k_x = update_stiffness(s.k_x, &s.robot, &s.object, s.stance.heading, params.desired_offset.x, &self.cfg.modulation);

        // capture-point offset against the stance foot the tick was integrated on
        let eps = modified_capture_point_offset(&s.robot, &s.stance, &out.wrench.f_xy, params.robot_mass, self.cfg.gait.omega0());

        s.step_tick += 1;
        s.tick += 1;
        let (phase, strike) = advance_phase(s.step_tick as f64 * dt, self.cfg.gait.step_duration);
        s.swing = swing_foot_position(&s.swing_start, &s.swing_target, phase, self.cfg.gait.swing_clearance);
        let mut plan = None;
        if strike {
            let landed = s.swing_target;
            s.swing_start = Vector3::new(s.stance.pos.x, s.stance.pos.y, 0.0);
            s.swing = s.swing_start;
            s.stance = landed;
            s.step_tick = 0;
            s.strikes += 1;
            if let Some(c) = s.pending_case.take() {
                s.case = c;
                s.k_x = c.presets().1.stiffness.x;
            }
            plan = Some(self.replan()?);
        }

        let record = TickRecord::capture(&self.state, self.cfg.gait.dt, hand_force, hand_moment, &out, self.support, eps);
        Ok(Tick { record, plan })
    }
}

pub fn case_params(base: &ComplianceParams, case: ComplianceCase, k_x: f64) -> ComplianceParams {
    let mut p = case.apply(base);
    p.ilip_stiffness = Vec2::new(k_x, p.hand.stiffness.y);
    p.ilip_damping = p.hand.damping;
    p
}
