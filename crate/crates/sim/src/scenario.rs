//! Scenario files: a leader script, a compliance case, a duration and a seed.
//!
//! ```toml
//! name = "periodic-case3"
//! duration = 60.0
//! seed = 7
//! case = 3
//!
//! [leader]
//! kind = "sinusoid"
//! amplitude = 0.25
//! period = 4.0
//! axis = "x"
//! ```
//!
//! Unknown keys are rejected. Waypoints are offsets from the object's start.

use std::fmt;
use std::path::Path;

use cotransport_core::{ComplianceParams, SpringDamper, Vec2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::leader::LeaderModel;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn unit(self) -> Vec2 {
        match self {
            Axis::X => Vec2::new(1.0, 0.0),
            Axis::Y => Vec2::new(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LeaderSpec {
    Hold {},
    Sinusoid {
        amplitude: f64,
        period: f64,
        #[serde(default = "default_axis")]
        axis: Axis,
        #[serde(default = "default_ramp")]
        ramp_time: f64,
    },
    RampToSpeed {
        speed: f64,
        #[serde(default = "default_ramp")]
        ramp_time: f64,
    },
    WaypointPath {
        points: Vec<[f64; 2]>,
        speed: f64,
    },
    Semicircle {
        radius: f64,
        rate: f64,
        #[serde(default = "default_ramp")]
        ramp_time: f64,
    },
}

fn default_axis() -> Axis {
    Axis::X
}

fn default_ramp() -> f64 {
    2.0
}

/// One of the four hand/planner compliance combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ComplianceCase(u8);

impl ComplianceCase {
    pub const ALL: [ComplianceCase; 4] = [ComplianceCase(1), ComplianceCase(2), ComplianceCase(3), ComplianceCase(4)];

    pub fn new(n: u8) -> Result<Self, ScenarioError> {
        Self::try_from(n).map_err(ScenarioError::Invalid)
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// `(planner, hand)` spring/damper presets for the forward axis.
    pub fn presets(self) -> (SpringDamper, SpringDamper) {
        let (low, high) = (SpringDamper::low_compliance(), SpringDamper::high_compliance());
        match self.0 {
            1 => (low, low),
            2 => (high, high),
            3 => (low, high),
            _ => (high, low),
        }
    }

    /// Replace the forward-axis entries of both levels; the lateral axis keeps
    /// the base values.
    pub fn apply(self, base: &ComplianceParams) -> ComplianceParams {
        let (planner, hand) = self.presets();
        let forward = |base: SpringDamper, preset: SpringDamper| SpringDamper {
            stiffness: Vec2::new(preset.stiffness.x, base.stiffness.y),
            damping: Vec2::new(preset.damping.x, base.damping.y),
        };
        ComplianceParams { planner: forward(base.planner, planner), hand: forward(base.hand, hand), ..*base }
    }
}

impl Default for ComplianceCase {
    fn default() -> Self {
        ComplianceCase(3)
    }
}

impl TryFrom<u8> for ComplianceCase {
    type Error = String;

    fn try_from(n: u8) -> Result<Self, String> {
        if (1..=4).contains(&n) {
            Ok(ComplianceCase(n))
        } else {
            Err(format!("compliance case must be 1..4, got {n}"))
        }
    }
}

impl From<ComplianceCase> for u8 {
    fn from(c: ComplianceCase) -> u8 {
        c.0
    }
}

impl fmt::Display for ComplianceCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Simulated time, s.
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub case: ComplianceCase,
    pub leader: LeaderSpec,
    /// Leader servo gains; defaults when absent.
    #[serde(default)]
    pub leader_model: LeaderModel,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn hold(name: &str, duration: f64) -> Self {
        Scenario {
            name: name.to_string(),
            duration,
            seed: 0,
            case: ComplianceCase::default(),
            leader: LeaderSpec::Hold {},
            leader_model: LeaderModel::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad("duration must be positive");
        }
        self.leader_model.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match &self.leader {
            LeaderSpec::Hold {} => {}
            LeaderSpec::Sinusoid { amplitude, period, ramp_time, .. } => {
                if !amplitude.is_finite() || !pos(*period) || !(*ramp_time >= 0.0) {
                    return bad("sinusoid needs a finite amplitude, a positive period and a non-negative ramp time");
                }
            }
            LeaderSpec::RampToSpeed { speed, ramp_time } => {
                if !speed.is_finite() || !(*ramp_time >= 0.0) {
                    return bad("ramp-to-speed needs a finite speed and a non-negative ramp time");
                }
            }
            LeaderSpec::WaypointPath { points, speed } => {
                if points.is_empty() || points.iter().flatten().any(|v| !v.is_finite()) {
                    return bad("waypoints must be non-empty and finite");
                }
                if !pos(*speed) {
                    return bad("waypoint speed must be positive");
                }
            }
            LeaderSpec::Semicircle { radius, rate, ramp_time } => {
                if !pos(*radius) || !rate.is_finite() || *rate == 0.0 || !(*ramp_time >= 0.0) {
                    return bad("semicircle needs a positive radius, a non-zero rate and a non-negative ramp time");
                }
            }
        }
        Ok(())
    }
}

const BUNDLED: [(&str, &str); 11] = [
    ("in-place", include_str!("../scenarios/in-place.toml")),
    ("periodic-case1", include_str!("../scenarios/periodic-case1.toml")),
    ("periodic-case2", include_str!("../scenarios/periodic-case2.toml")),
    ("periodic-case3", include_str!("../scenarios/periodic-case3.toml")),
    ("periodic-case4", include_str!("../scenarios/periodic-case4.toml")),
    ("straight-0.3", include_str!("../scenarios/straight-0.3.toml")),
    ("straight-0.5", include_str!("../scenarios/straight-0.5.toml")),
    ("straight-0.7", include_str!("../scenarios/straight-0.7.toml")),
    ("lateral-square", include_str!("../scenarios/lateral-square.toml")),
    ("semicircle", include_str!("../scenarios/semicircle.toml")),
    ("live-hold", include_str!("../scenarios/live-hold.toml")),
];

/// The scenario suite shipped with the simulator, in run order. The idle
/// scenario of the live service is not part of it.
pub fn bundled() -> Vec<Scenario> {
    BUNDLED.iter().filter(|(n, _)| *n != "live-hold").map(|(_, text)| Scenario::parse(text).expect("bundled scenario parses")).collect()
}

pub fn bundled_named(name: &str) -> Option<Scenario> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| Scenario::parse(text).expect("bundled scenario parses"))
}
