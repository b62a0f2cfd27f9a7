//! Scripted leader: a saturated PD servo that drags the object along a
//! reference trajectory, with seeded force noise.

use std::f64::consts::PI;

use cotransport_core::{angle_diff, ConfigError, HeadingRotation, Vec2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::scenario::LeaderSpec;

/// Hard ceiling on any leader force, N.
pub const MAX_LEADER_FORCE: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeaderModel {
    /// Position gain, N/m.
    pub kp: f64,
    /// Velocity gain, N·s/m.
    pub kd: f64,
    /// Yaw gains, N·m/rad and N·m·s/rad.
    pub yaw_kp: f64,
    pub yaw_kd: f64,
    /// Per-axis force saturation, N.
    pub saturation: f64,
    /// Yaw moment saturation, N·m.
    pub moment_saturation: f64,
    /// Standard deviation of the per-tick force noise, N.
    pub noise: f64,
}

impl Default for LeaderModel {
    fn default() -> Self {
        Self { kp: 400.0, kd: 120.0, yaw_kp: 20.0, yaw_kd: 8.0, saturation: 150.0, moment_saturation: 30.0, noise: 0.5 }
    }
}

impl LeaderModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let all = [self.kp, self.kd, self.yaw_kp, self.yaw_kd, self.saturation, self.moment_saturation, self.noise];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ConfigError::invalid("leader", "gains, limits and noise must be finite and non-negative"));
        }
        if self.saturation > MAX_LEADER_FORCE {
            return Err(ConfigError::invalid("leader", format!("force saturation {} N exceeds {MAX_LEADER_FORCE} N", self.saturation)));
        }
        Ok(())
    }

    /// Clamp a planar force and a yaw moment to the leader's limits.
    pub fn saturate(&self, force: Vec2, moment: f64) -> (Vec2, f64) {
        let s = self.saturation;
        let m = self.moment_saturation;
        (Vec2::new(force.x.clamp(-s, s), force.y.clamp(-s, s)), moment.clamp(-m, m))
    }
}

/// Reference pose and rate of the object at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferencePoint {
    pub pos: Vec2,
    pub vel: Vec2,
    pub yaw: f64,
    pub yaw_rate: f64,
}

/// Time warp that starts at rest and reaches unit rate after `ramp` seconds.
fn ramped(t: f64, ramp: f64) -> (f64, f64) {
    if ramp <= 0.0 {
        (t, 1.0)
    } else if t < ramp {
        (t * t / (2.0 * ramp), t / ramp)
    } else {
        (t - ramp / 2.0, 1.0)
    }
}

/// Reference trajectory anchored at the object's initial pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    spec: LeaderSpec,
    origin: Vec2,
    yaw0: f64,
}

impl Reference {
    pub fn new(spec: LeaderSpec, origin: Vec2, yaw0: f64) -> Self {
        Self { spec, origin, yaw0 }
    }

    pub fn at(&self, t: f64) -> ReferencePoint {
        let rot = HeadingRotation::new(self.yaw0);
        let still = |pos: Vec2| ReferencePoint { pos, vel: Vec2::zeros(), yaw: self.yaw0, yaw_rate: 0.0 };
        match &self.spec {
            LeaderSpec::Hold {} => still(self.origin),
            LeaderSpec::Sinusoid { amplitude, period, axis, ramp_time } => {
                let (tau, rate) = ramped(t, *ramp_time);
                let dir = rot.to_world(&axis.unit());
                let w = 2.0 * PI / period;
                ReferencePoint {
                    pos: self.origin + dir * (*amplitude) * (w * tau).sin(),
                    vel: dir * (*amplitude) * w * (w * tau).cos() * rate,
                    yaw: self.yaw0,
                    yaw_rate: 0.0,
                }
            }
            LeaderSpec::RampToSpeed { speed, ramp_time } => {
                let (tau, rate) = ramped(t, *ramp_time);
                let dir = rot.to_world(&Vec2::new(1.0, 0.0));
                ReferencePoint { pos: self.origin + dir * (*speed) * tau, vel: dir * (*speed) * rate, yaw: self.yaw0, yaw_rate: 0.0 }
            }
            LeaderSpec::WaypointPath { points, speed } => {
                // each leg starts and ends at rest, covered in len / speed seconds
                let mut from = Vec2::zeros();
                let mut remaining = t;
                for p in points {
                    let to = Vec2::new(p[0], p[1]);
                    let duration = (to - from).norm() / speed;
                    if remaining < duration {
                        let u = remaining / duration;
                        let shape = u * u * (3.0 - 2.0 * u);
                        let rate = 6.0 * u * (1.0 - u) / duration;
                        let local = from + (to - from) * shape;
                        return ReferencePoint {
                            pos: self.origin + rot.to_world(&local),
                            vel: rot.to_world(&((to - from) * rate)),
                            yaw: self.yaw0,
                            yaw_rate: 0.0,
                        };
                    }
                    remaining -= duration;
                    from = to;
                }
                still(self.origin + rot.to_world(&from))
            }
            LeaderSpec::Semicircle { radius, rate, ramp_time } => {
                let (tau, r) = ramped(t, *ramp_time);
                let end = PI / rate.abs();
                let (phi, phi_dot) = if tau >= end { (PI * rate.signum(), 0.0) } else { (rate * tau, rate * r) };
                // turn toward +y for positive rates
                let side = rate.signum();
                let centre = Vec2::new(0.0, side * radius);
                let local = centre + Vec2::new(radius * phi.abs().sin(), -side * radius * phi.abs().cos());
                let local_vel = Vec2::new(radius * phi.abs().cos(), side * radius * phi.abs().sin()) * phi_dot.abs();
                ReferencePoint { pos: self.origin + rot.to_world(&local), vel: rot.to_world(&local_vel), yaw: self.yaw0 + phi, yaw_rate: phi_dot }
            }
        }
    }

    /// Distance from `pos` to the reference path. For the semicircle this is
    /// the radial distance to the arc; otherwise the distance to the reference
    /// point at time `t`.
    pub fn path_error(&self, pos: &Vec2, t: f64) -> f64 {
        match &self.spec {
            LeaderSpec::Semicircle { radius, rate, .. } => {
                let centre = self.origin + HeadingRotation::new(self.yaw0).to_world(&Vec2::new(0.0, rate.signum() * radius));
                ((pos - centre).norm() - radius).abs()
            }
            _ => (pos - self.at(t).pos).norm(),
        }
    }
}

/// Leader force generator for one run.
#[derive(Debug, Clone)]
pub struct Leader {
    pub model: LeaderModel,
    pub reference: Reference,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

impl Leader {
    pub fn new(model: LeaderModel, reference: Reference, seed: u64) -> Self {
        let noise = (model.noise > 0.0).then(|| Normal::new(0.0, model.noise).expect("validated noise"));
        Self { model, reference, rng: ChaCha8Rng::seed_from_u64(seed), noise }
    }

    /// Force and yaw moment on the object at time `t`.
    pub fn wrench(&mut self, t: f64, pos: &Vec2, vel: &Vec2, yaw: f64, yaw_rate: f64) -> (Vec2, f64) {
        let r = self.reference.at(t);
        let m = &self.model;
        let mut force = (r.pos - pos) * m.kp + (r.vel - vel) * m.kd;
        if let Some(n) = &self.noise {
            force += Vec2::new(n.sample(&mut self.rng), n.sample(&mut self.rng));
        }
        let moment = m.yaw_kp * angle_diff(r.yaw, yaw) + m.yaw_kd * (r.yaw_rate - yaw_rate);
        m.saturate(force, moment)
    }
}
