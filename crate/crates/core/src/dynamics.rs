//! Ego vehicle simulation and positional covariance propagation.
//!
//! The simulated vehicle follows a kinematic bicycle model driven by a
//! pure-pursuit steering law; its positional uncertainty follows a linear
//! random-walk model on the side (the two are intentionally decoupled:
//! the planner simulates the nonlinear vehicle but propagates covariance
//! through the linear model). The footprint is exposed as four oriented
//! half-planes for the collision-risk bound.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalize_angle;

/// Pose and speed of the ego vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    /// Radians, normalized to `(-pi, pi]`.
    pub heading: f64,
    /// Meters per second, non-negative.
    pub speed: f64,
}

impl EgoState {
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

/// Ego state with positional covariance (position only; heading and speed
/// are treated as known).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBelief {
    pub mean: EgoState,
    pub covariance: Matrix2<f64>,
}

impl StateBelief {
    /// Checks symmetry and positive semi-definiteness of the covariance.
    pub fn validate(&self) -> Result<()> {
        let c = self.covariance;
        if (c[(0, 1)] - c[(1, 0)]).abs() > 1e-12 {
            return Err(Error::Inconsistency(format!(
                "covariance asymmetric by {}",
                (c[(0, 1)] - c[(1, 0)]).abs()
            )));
        }
        let min_eig = c.symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-12 {
            return Err(Error::NotPsd(min_eig));
        }
        Ok(())
    }
}

/// Steering angle and longitudinal acceleration command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Radians; callers should stay within `steer_max` (step clamps anyway).
    pub steering: f64,
    /// Meters per second squared, within `[a_min, a_max]`.
    pub accel: f64,
}

/// Vehicle geometry, integrator resolution, actuator limits, controller
/// gains, and the noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionConfig {
    /// Distance between axles, meters.
    pub wheelbase: f64,
    /// Footprint of the vehicle body, meters.
    pub ego_length: f64,
    pub ego_width: f64,
    /// Integration step, seconds.
    pub dt: f64,
    /// Additive positional process noise per step, m².
    pub process_noise: Matrix2<f64>,
    /// Positional covariance at the start of a run, m².
    pub initial_covariance: Matrix2<f64>,
    /// Pure-pursuit lookahead distance, meters.
    pub lookahead: f64,
    pub v_max: f64,
    pub steer_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    /// Speed the controller works toward on open segments.
    pub cruise_speed: f64,
    /// Arrival radius for steer_to, meters.
    pub goal_tolerance: f64,
    /// Upper bound on simulated steps per steer_to call.
    pub max_steps: usize,
}

impl Default for MotionConfig {
    fn default() -> Self {
        let dt = 0.1;
        // Positional random walk: 2 cm of drift std per root-second.
        let q = 0.02f64.powi(2) * dt;
        Self {
            wheelbase: 2.7,
            ego_length: 4.5,
            ego_width: 1.8,
            dt,
            process_noise: Matrix2::from_diagonal_element(q),
            initial_covariance: Matrix2::from_diagonal_element(0.01),
            lookahead: 4.0,
            v_max: 15.0,
            steer_max: 0.6,
            a_min: -4.0,
            a_max: 3.0,
            cruise_speed: 8.0,
            goal_tolerance: 0.5,
            max_steps: 600,
        }
    }
}

/// One kinematic bicycle step. Controls are clamped to the configured
/// bounds, speed to `[0, v_max]`, heading renormalized.
pub fn step(state: EgoState, control: ControlInput, cfg: &MotionConfig) -> EgoState {
    let steer = control.steering.clamp(-cfg.steer_max, cfg.steer_max);
    let accel = control.accel.clamp(cfg.a_min, cfg.a_max);
    EgoState {
        x: state.x + state.speed * state.heading.cos() * cfg.dt,
        y: state.y + state.speed * state.heading.sin() * cfg.dt,
        heading: normalize_angle(
            state.heading + state.speed / cfg.wheelbase * steer.tan() * cfg.dt,
        ),
        speed: (state.speed + accel * cfg.dt).clamp(0.0, cfg.v_max),
    }
}

/// Result of a closed-loop steering attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct SteerOutcome {
    /// Post-step states paired with the control that produced each.
    pub trajectory: Vec<(EgoState, ControlInput)>,
    /// True when the final state is within goal_tolerance of the target.
    pub complete: bool,
}

/// Simulates the vehicle toward `target` with a pure-pursuit lateral law
/// and a proportional speed law.
///
/// The reference path is the straight segment from the starting position
/// to the target; the controller chases a lookahead point on it. The
/// speed law tracks the cruise speed far away and decays linearly with
/// remaining distance so arrival is gentle. Returns the dt-resolution
/// trajectory; `complete` is false when max_steps ran out first (the
/// partial prefix is still valid).
pub fn steer_to(belief: &StateBelief, target: Vector2<f64>, cfg: &MotionConfig) -> SteerOutcome {
    let mut state = belief.mean;
    if (state.position() - target).norm() <= cfg.goal_tolerance {
        return SteerOutcome {
            trajectory: Vec::new(),
            complete: true,
        };
    }

    let start = state.position();
    let segment = target - start;
    let seg_len = segment.norm();
    // Degenerate segment handled above; seg_len > goal_tolerance here.
    let seg_dir = segment / seg_len;

    let mut trajectory = Vec::new();
    for _ in 0..cfg.max_steps {
        let pos = state.position();
        let along = (pos - start).dot(&seg_dir).clamp(0.0, seg_len);
        let look = (along + cfg.lookahead).min(seg_len);
        let look_pt = start + seg_dir * look;

        let to_look = look_pt - pos;
        let look_dist = to_look.norm().max(1e-6);
        let alpha = normalize_angle(to_look.y.atan2(to_look.x) - state.heading);
        let steering = (2.0 * cfg.wheelbase * alpha.sin() / look_dist)
            .atan()
            .clamp(-cfg.steer_max, cfg.steer_max);

        let dist_to_target = (pos - target).norm();
        let v_des = cfg.cruise_speed.min(dist_to_target);
        let accel = (v_des - state.speed).clamp(cfg.a_min, cfg.a_max);

        let control = ControlInput { steering, accel };
        state = step(state, control, cfg);
        trajectory.push((state, control));

        if (state.position() - target).norm() <= cfg.goal_tolerance {
            return SteerOutcome {
                trajectory,
                complete: true,
            };
        }
    }
    SteerOutcome {
        trajectory,
        complete: false,
    }
}

/// One step of linear covariance propagation: `A Σ Aᵀ + Σ_γ`, symmetrized
/// to keep floating-point drift from accumulating.
pub fn propagate_covariance(
    cov: &Matrix2<f64>,
    a: &Matrix2<f64>,
    process_noise: &Matrix2<f64>,
) -> Matrix2<f64> {
    let m = a * cov * a.transpose() + process_noise;
    (m + m.transpose()) * 0.5
}

/// One face of a convex footprint: the constraint `normal · p < offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    /// Outward unit normal.
    pub normal: Vector2<f64>,
    /// Signed distance of the face line from the origin along the normal.
    pub offset: f64,
}

/// The ego footprint as the intersection of four half-planes
/// (front, rear, left, right in body order).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlaneSet {
    pub faces: [HalfPlane; 4],
}

impl HalfPlaneSet {
    /// Strict interior test; boundary points are excluded (they count as
    /// contact, which the collision checks treat as a hit).
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        self.faces.iter().all(|f| f.normal.dot(p) < f.offset)
    }

    /// Checks unit normals, opposite-face pairing, and non-empty interior.
    pub fn validate(&self) -> Result<()> {
        for f in &self.faces {
            if (f.normal.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::Inconsistency(format!(
                    "face normal has norm {}",
                    f.normal.norm()
                )));
            }
        }
        for (i, j) in [(0usize, 1usize), (2, 3)] {
            let (a, b) = (&self.faces[i], &self.faces[j]);
            if (a.normal + b.normal).norm() > 1e-12 {
                return Err(Error::Inconsistency(
                    "opposite faces are not anti-parallel".into(),
                ));
            }
            // normal·p < offset_a and -normal·p < offset_b bound a slab of
            // width offset_a + offset_b.
            if a.offset + b.offset <= 0.0 {
                return Err(Error::Inconsistency("footprint interior is empty".into()));
            }
        }
        Ok(())
    }
}

/// Half-plane representation of the oriented ego rectangle at `state`.
pub fn ego_polygon(state: &EgoState, cfg: &MotionConfig) -> HalfPlaneSet {
    let c = state.position();
    let u = Vector2::new(state.heading.cos(), state.heading.sin());
    let v = Vector2::new(-state.heading.sin(), state.heading.cos());
    let hl = 0.5 * cfg.ego_length;
    let hw = 0.5 * cfg.ego_width;
    let face = |n: Vector2<f64>, half: f64| HalfPlane {
        normal: n,
        offset: n.dot(&c) + half,
    };
    HalfPlaneSet {
        faces: [face(u, hl), face(-u, hl), face(v, hw), face(-v, hw)],
    }
}
