//! Online modulation of the I-LIP forward spring toward the desired separation.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::state::{HeadingRotation, PlanarState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationGains {
    /// Position gain, N/m per m.
    pub k_x1: f64,
    /// Velocity gain, N/m per m/s.
    pub b_x1: f64,
    pub k_min: f64,
    pub k_max: f64,
}

impl Default for ModulationGains {
    fn default() -> Self {
        Self { k_x1: 20.0, b_x1: 5.0, k_min: 5.0, k_max: 1000.0 }
    }
}

impl ModulationGains {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.k_x1 >= 0.0 && self.b_x1 >= 0.0) {
            return Err(ConfigError::invalid("stiffness modulation", "gains must be non-negative"));
        }
        if !(self.k_min > 0.0 && self.k_min <= self.k_max && self.k_max.is_finite()) {
            return Err(ConfigError::invalid("stiffness modulation", "need 0 < k_min <= k_max"));
        }
        Ok(())
    }
}

/// One update of the forward spring: `K ← clamp(K − k₁ e − b₁ ė)` with `e` the
/// local forward separation error and `ė` its rate.
pub fn update_stiffness(k_x: f64, robot: &PlanarState, object: &PlanarState, heading: f64, desired_x: f64, gains: &ModulationGains) -> f64 {
    let rot = HeadingRotation::new(heading);
    let e = rot.to_local(&(object.pos - robot.pos)).x - desired_x;
    let e_dot = rot.to_local(&(object.vel - robot.vel)).x;
    (k_x - gains.k_x1 * e - gains.b_x1 * e_dot).clamp(gains.k_min, gains.k_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::Vec2;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_error_leaves_stiffness() {
        let robot = PlanarState::new(Vec2::new(1.0, 2.0), Vec2::new(0.3, 0.1));
        let object = PlanarState::new(Vec2::new(1.6, 2.0), Vec2::new(0.3, 0.1));
        assert_eq!(update_stiffness(120.0, &robot, &object, 0.0, 0.6, &ModulationGains::default()), 120.0);
    }

    #[test]
    fn clamp_holds_at_max() {
        let robot = PlanarState::default();
        let object = PlanarState::at_rest(Vec2::new(0.5, 0.0));
        let g = ModulationGains::default();
        assert_eq!(update_stiffness(g.k_max, &robot, &object, 0.0, 0.6, &g), g.k_max);
    }

    #[test]
    fn positive_error_lowers_stiffness() {
        let robot = PlanarState::default();
        let object = PlanarState::at_rest(Vec2::new(0.65, 0.0));
        let k = update_stiffness(100.0, &robot, &object, 0.0, 0.6, &ModulationGains::default());
        assert_abs_diff_eq!(k, 99.0, epsilon = 1e-12);
    }

    #[test]
    fn error_is_measured_along_heading() {
        let robot = PlanarState::default();
        let object = PlanarState::at_rest(Vec2::new(0.0, 0.65));
        let k = update_stiffness(100.0, &robot, &object, std::f64::consts::FRAC_PI_2, 0.6, &ModulationGains::default());
        assert_abs_diff_eq!(k, 99.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn output_within_clamps(k in -100.0..2000.0f64, sx in -3.0..3.0f64, sy in -3.0..3.0f64, vx in -3.0..3.0f64, th in -4.0..4.0f64) {
            let g = ModulationGains::default();
            let robot = PlanarState::default();
            let object = PlanarState::new(Vec2::new(sx, sy), Vec2::new(vx, 0.0));
            let out = update_stiffness(k, &robot, &object, th, 0.6, &g);
            prop_assert!(out >= g.k_min && out <= g.k_max);
        }

        #[test]
        fn stationary_only_at_zero_error(k in 10.0..900.0f64, e in -0.2..0.2f64, ed in -0.2..0.2f64) {
            let g = ModulationGains::default();
            let robot = PlanarState::default();
            let object = PlanarState::new(Vec2::new(0.6 + e, 0.0), Vec2::new(ed, 0.0));
            let out = update_stiffness(k, &robot, &object, 0.0, 0.6, &g);
            let stationary = (out - k).abs() < 1e-12;
            prop_assert_eq!(stationary, (g.k_x1 * e + g.b_x1 * ed).abs() < 1e-12);
        }
    }
}
