//! Balance and collaboration metrics computed from logged runs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{FootPose, PlanarState, Vec2};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricsError {
    #[error("no {width} s window fits a record spanning {span} s")]
    EmptyWindow { width: f64, span: f64 },
    #[error("sample times must be non-decreasing (index {0})")]
    NonMonotone(usize),
    #[error("window width must exceed the stride and both must be positive")]
    BadWindow,
}

/// Offset of the force-modified capture point from the stance foot, in the
/// stance frame.
pub fn modified_capture_point_offset(robot: &PlanarState, foot: &FootPose, external_force: &Vec2, robot_mass: f64, omega0: f64) -> Vec2 {
    let gamma = robot.pos + external_force / (robot_mass * omega0 * omega0);
    let xi = gamma + robot.vel / omega0;
    foot.rotation().to_local(&(xi - foot.pos))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortWindow {
    /// Window length, s.
    pub width: f64,
    /// Window stride, s.
    pub stride: f64,
}

impl Default for EffortWindow {
    fn default() -> Self {
        Self { width: 7.67, stride: 0.01534 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceSample {
    pub t: f64,
    /// Leader force on the object, N.
    pub hand_force: Vec2,
    /// Robot force on the object, N.
    pub robot_force: Vec2,
    pub object_vel: Vec2,
}

/// Which force/velocity components enter the effort integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EffortAxes {
    Planar,
    /// Projection onto a fixed direction (normalized internally).
    Along(Vec2),
}

impl EffortAxes {
    fn powers(&self, s: &ForceSample) -> (f64, f64) {
        match self {
            EffortAxes::Planar => (s.hand_force.dot(&s.object_vel), s.robot_force.dot(&s.object_vel)),
            EffortAxes::Along(dir) => {
                let d = dir.normalize();
                let v = s.object_vel.dot(&d);
                (s.hand_force.dot(&d) * v, s.robot_force.dot(&d) * v)
            }
        }
    }
}

/// Below this total effort a window counts as effortless and gets η = 1.
pub const EFFORT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    /// End time of the window, s.
    pub t: f64,
    pub eta: f64,
    pub net_effort: f64,
    pub total_effort: f64,
}

/// Sliding-window collaboration efficiency `η = E_n / E_s` with trapezoidal
/// quadrature over the samples inside each window.
pub fn efficiency(samples: &[ForceSample], window: &EffortWindow, axes: EffortAxes) -> Result<Vec<EfficiencyPoint>, MetricsError> {
    if !(window.stride > 0.0 && window.width > window.stride) {
        return Err(MetricsError::BadWindow);
    }
    if let Some(i) = samples.windows(2).position(|w| !(w[1].t >= w[0].t)) {
        return Err(MetricsError::NonMonotone(i + 1));
    }
    let span = match (samples.first(), samples.last()) {
        (Some(a), Some(b)) => b.t - a.t,
        _ => 0.0,
    };
    if span < window.width || samples.len() < 2 {
        return Err(MetricsError::EmptyWindow { width: window.width, span });
    }

    // cumulative trapezoids of the net and summed integrands
    let mut net = Vec::with_capacity(samples.len());
    let mut sum = Vec::with_capacity(samples.len());
    let (mut cn, mut cs) = (0.0, 0.0);
    let mut prev: Option<(f64, f64, f64)> = None;
    for s in samples {
        let (ph, pr) = axes.powers(s);
        let (n, t) = ((ph + pr).abs(), ph.abs() + pr.abs());
        if let Some((t0, n0, s0)) = prev {
            let dt = s.t - t0;
            cn += 0.5 * dt * (n + n0);
            cs += 0.5 * dt * (t + s0);
        }
        net.push(cn);
        sum.push(cs);
        prev = Some((s.t, n, t));
    }

    let t0 = samples[0].t;
    let count = ((span - window.width) / window.stride + 1e-9).floor() as usize + 1;
    let tol = 1e-9 * window.width;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let start = t0 + k as f64 * window.stride;
        let end = start + window.width;
        let i = samples.partition_point(|s| s.t < start - tol);
        let j = samples.partition_point(|s| s.t <= end + tol).saturating_sub(1);
        if j <= i {
            continue;
        }
        let e_n = net[j] - net[i];
        let e_s = sum[j] - sum[i];
        let eta = if e_s < EFFORT_EPSILON { 1.0 } else { (e_n / e_s).clamp(0.0, 1.0) };
        out.push(EfficiencyPoint { t: end, eta, net_effort: e_n, total_effort: e_s });
    }
    if out.is_empty() {
        return Err(MetricsError::EmptyWindow { width: window.width, span });
    }
    Ok(out)
}

/// Mean efficiency over windows.
pub fn mean_efficiency(points: &[EfficiencyPoint]) -> Option<f64> {
    if points.is_empty() {
        return None;
    }
    Some(points.iter().map(|p| p.eta).sum::<f64>() / points.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerticalSample {
    pub t: f64,
    pub robot_fz: f64,
    pub human_fz: f64,
}

/// Robot fraction of the vertical support; zero when neither side carries load.
pub fn load_share_series(samples: &[VerticalSample]) -> Vec<(f64, f64)> {
    samples
        .iter()
        .map(|s| {
            let total = s.robot_fz + s.human_fz;
            (s.t, if total.abs() > 0.0 { s.robot_fz / total } else { 0.0 })
        })
        .collect()
}

/// One row of the metrics table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: f64,
    pub eta: f64,
    pub eps_x: f64,
    pub eps_y: f64,
    #[serde(rename = "K_x_t")]
    pub k_x_t: f64,
    pub load_share: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::FootSide;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(n: usize, dt: f64, f: impl Fn(f64) -> (Vec2, Vec2, Vec2)) -> Vec<ForceSample> {
        (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                let (h, r, v) = f(t);
                ForceSample { t, hand_force: h, robot_force: r, object_vel: v }
            })
            .collect()
    }

    #[test]
    fn capture_point_reduces_without_force() {
        let robot = PlanarState::new(Vec2::new(0.1, 0.05), Vec2::new(0.3, -0.2));
        let foot = FootPose::new(Vec2::new(0.02, -0.1), 0.0, FootSide::Left);
        let w = 3.3;
        let eps = modified_capture_point_offset(&robot, &foot, &Vec2::zeros(), 45.0, w);
        assert_abs_diff_eq!(eps, robot.pos + robot.vel / w - foot.pos, epsilon = 1e-15);
    }

    #[test]
    fn capture_point_vanishes_at_force_shifted_equilibrium() {
        let (m, w) = (45.0, 3.3);
        let f = Vec2::new(20.0, -7.0);
        let foot = FootPose::new(Vec2::new(0.4, 0.2), 0.7, FootSide::Right);
        let robot = PlanarState::at_rest(foot.pos - f / (m * w * w));
        assert_abs_diff_eq!(modified_capture_point_offset(&robot, &foot, &f, m, w).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn capture_point_generic_case() {
        let (m, w) = (45.0, (9.81f64 / 0.9).sqrt());
        let robot = PlanarState::new(Vec2::new(1.0, 2.0), Vec2::new(0.5, 0.1));
        let foot = FootPose::new(Vec2::new(0.9, 2.1), std::f64::consts::FRAC_PI_2, FootSide::Left);
        let f = Vec2::new(30.0, 10.0);
        // by hand: γ = x + F/(m ω²), ξ = γ + v/ω, offset = Rᵀ(ξ − u) with R(90°)
        let k = 1.0 / (m * w * w);
        let xi_x = 1.0 + 30.0 * k + 0.5 / w;
        let xi_y = 2.0 + 10.0 * k + 0.1 / w;
        let (dx, dy) = (xi_x - 0.9, xi_y - 2.1);
        let eps = modified_capture_point_offset(&robot, &foot, &f, m, w);
        assert_abs_diff_eq!(eps.x, dy, epsilon = 1e-14);
        assert_abs_diff_eq!(eps.y, -dx, epsilon = 1e-14);
    }

    #[test]
    fn lone_leader_is_fully_efficient() {
        let rec = record(3000, 0.01, |t| (Vec2::new(10.0 * t.sin(), 3.0), Vec2::zeros(), Vec2::new(t.cos(), 0.2)));
        for p in efficiency(&rec, &EffortWindow::default(), EffortAxes::Planar).unwrap() {
            assert_abs_diff_eq!(p.eta, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn perfect_opposition_is_zero_efficiency() {
        let rec = record(3000, 0.01, |t| {
            let h = Vec2::new(10.0 * t.sin(), 3.0);
            (h, -h, Vec2::new(0.5 + 0.1 * t.cos(), 0.2))
        });
        for p in efficiency(&rec, &EffortWindow::default(), EffortAxes::Planar).unwrap() {
            assert_abs_diff_eq!(p.eta, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn effortless_windows_count_as_efficient() {
        let rec = record(1000, 0.01, |_| (Vec2::new(5.0, 0.0), Vec2::new(-5.0, 0.0), Vec2::zeros()));
        let pts = efficiency(&rec, &EffortWindow { width: 2.0, stride: 0.5 }, EffortAxes::Planar).unwrap();
        assert!(pts.iter().all(|p| p.eta == 1.0));
    }

    #[test]
    fn short_record_has_no_window() {
        let rec = record(100, 0.01, |_| (Vec2::zeros(), Vec2::zeros(), Vec2::zeros()));
        assert!(matches!(efficiency(&rec, &EffortWindow::default(), EffortAxes::Planar), Err(MetricsError::EmptyWindow { .. })));
        assert!(matches!(efficiency(&[], &EffortWindow::default(), EffortAxes::Planar), Err(MetricsError::EmptyWindow { .. })));
    }

    #[test]
    fn non_monotone_record_is_rejected() {
        let mut rec = record(1000, 0.01, |_| (Vec2::zeros(), Vec2::zeros(), Vec2::zeros()));
        rec[500].t = 0.0;
        assert_eq!(efficiency(&rec, &EffortWindow::default(), EffortAxes::Planar), Err(MetricsError::NonMonotone(500)));
    }

    #[test]
    fn window_count_and_quadrature() {
        // constant powers: E_n and E_s are exact under the trapezoid rule
        let rec = record(1001, 0.01, |_| (Vec2::new(4.0, 0.0), Vec2::new(-1.0, 0.0), Vec2::new(2.0, 0.0)));
        let w = EffortWindow { width: 2.0, stride: 0.5 };
        let pts = efficiency(&rec, &w, EffortAxes::Planar).unwrap();
        assert_eq!(pts.len(), 17);
        for p in &pts {
            assert_abs_diff_eq!(p.net_effort, 6.0 * 2.0, epsilon = 1e-9);
            assert_abs_diff_eq!(p.total_effort, 10.0 * 2.0, epsilon = 1e-9);
            assert_abs_diff_eq!(p.eta, 0.6, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(pts[0].t, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn forward_only_variant_ignores_lateral_effort() {
        // lateral components oppose each other, forward ones agree
        let rec = record(1000, 0.01, |_| (Vec2::new(3.0, 5.0), Vec2::new(1.0, -5.0), Vec2::new(0.4, 0.3)));
        let w = EffortWindow { width: 2.0, stride: 0.5 };
        let forward = efficiency(&rec, &w, EffortAxes::Along(Vec2::new(2.0, 0.0))).unwrap();
        assert!(forward.iter().all(|p| (p.eta - 1.0).abs() < 1e-12));
        let planar = efficiency(&rec, &w, EffortAxes::Planar).unwrap();
        assert!(planar.iter().all(|p| p.eta < 1.0));
    }

    #[test]
    fn efficiency_invariant_to_time_rescaling() {
        let f = |t: f64| (Vec2::new(10.0 * t.sin(), 2.0 * t.cos()), Vec2::new(-4.0 * (0.7 * t).cos(), 1.0), Vec2::new((1.3 * t).sin(), 0.3));
        let base = record(2000, 0.01, f);
        let w = EffortWindow { width: 7.67, stride: 0.5 };
        let a = efficiency(&base, &w, EffortAxes::Planar).unwrap();
        for scale in [0.5, 3.0] {
            let scaled: Vec<ForceSample> = base.iter().map(|s| ForceSample { t: s.t * scale, ..*s }).collect();
            let ws = EffortWindow { width: w.width * scale, stride: w.stride * scale };
            let b = efficiency(&scaled, &ws, EffortAxes::Planar).unwrap();
            assert_eq!(a.len(), b.len());
            for (p, q) in a.iter().zip(&b) {
                assert_abs_diff_eq!(p.eta, q.eta, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn full_efficiency_iff_powers_share_sign() {
        let w = EffortWindow { width: 2.0, stride: 0.25 };
        // same sign everywhere: robot assists along the motion
        let aligned = record(600, 0.01, |t| (Vec2::new(3.0 + t.sin(), 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.5, 0.0)));
        assert!(efficiency(&aligned, &w, EffortAxes::Planar).unwrap().iter().all(|p| (p.eta - 1.0).abs() < 1e-12));
        // opposite sign on part of each window
        let mixed = record(600, 0.01, |t| (Vec2::new(3.0, 0.0), Vec2::new((4.0 * t).sin(), 0.0), Vec2::new(0.5, 0.0)));
        assert!(efficiency(&mixed, &w, EffortAxes::Planar).unwrap().iter().all(|p| p.eta < 1.0 - 1e-6));
    }

    #[test]
    fn efficiency_bounded_on_random_records() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let rec: Vec<ForceSample> = (0..1000)
            .map(|i| ForceSample {
                t: i as f64 * 0.01,
                hand_force: Vec2::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)),
                robot_force: Vec2::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)),
                object_vel: Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            })
            .collect();
        for axes in [EffortAxes::Planar, EffortAxes::Along(Vec2::new(1.0, 0.0))] {
            for p in efficiency(&rec, &EffortWindow { width: 1.0, stride: 0.1 }, axes).unwrap() {
                assert!((0.0..=1.0).contains(&p.eta));
            }
        }
    }

    #[test]
    fn load_share_examples() {
        let s = load_share_series(&[
            VerticalSample { t: 0.0, robot_fz: 50.0, human_fz: 50.0 },
            VerticalSample { t: 0.1, robot_fz: 50.0, human_fz: 0.0 },
            VerticalSample { t: 0.2, robot_fz: 80.9325, human_fz: 66.2175 },
        ]);
        assert_eq!(s[0].1, 0.5);
        assert_eq!(s[1].1, 1.0);
        assert_abs_diff_eq!(s[2].1, 0.55, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn random_record_eta_in_unit_interval(
            hx in prop::collection::vec(-50.0..50.0f64, 60),
            rx in prop::collection::vec(-50.0..50.0f64, 60),
            vx in prop::collection::vec(-1.0..1.0f64, 60),
        ) {
            let rec: Vec<ForceSample> = (0..60)
                .map(|i| ForceSample {
                    t: i as f64 * 0.1,
                    hand_force: Vec2::new(hx[i], rx[59 - i]),
                    robot_force: Vec2::new(rx[i], hx[59 - i]),
                    object_vel: Vec2::new(vx[i], vx[59 - i]),
                })
                .collect();
            for p in efficiency(&rec, &EffortWindow { width: 1.0, stride: 0.3 }, EffortAxes::Planar).unwrap() {
                prop_assert!((0.0..=1.0).contains(&p.eta));
            }
        }
    }
}
