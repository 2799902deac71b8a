//! Conversion of fused detection beliefs into planar obstacle geometry.
//!
//! The planner works in 2D. Each detected object becomes an oriented box
//! plus a positional covariance; detector uncertainty enters twice:
//!
//! - scale/position variance widens the box through lateral and
//!   longitudinal standard deviations,
//! - yaw variance adds margins that cover the box corners sweeping
//!   through the uncertain heading.
//!
//! Objects whose class scores look unreliable (high predictive entropy or
//! mutual information) are dropped before planning.

use nalgebra::{Matrix2, Rotation2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::{DetectionBelief, THETA_IDX};

/// Indices of the box elements inside the 7-vector layout.
const X_IDX: usize = 0;
const Y_IDX: usize = 1;
const W_IDX: usize = 4;
const L_IDX: usize = 5;

/// A planar obstacle with uncertainty-inflated extent.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleBelief {
    /// Box center in the world frame, meters.
    pub center: Vector2<f64>,
    /// Heading of the long axis, radians.
    pub heading: f64,
    /// Deterministic half extents of the mean box: length/2 along the
    /// heading, width/2 across it.
    pub half_length: f64,
    pub half_width: f64,
    /// Inflated semi-axes: half extent plus directional sigma plus yaw
    /// margin. Used for the reporting ellipses.
    pub semi_axis_a: f64,
    pub semi_axis_b: f64,
    /// Positional covariance in the world frame (sigma and yaw margin
    /// folded in, rotated by the heading).
    pub covariance: Matrix2<f64>,
    /// Constant world-frame velocity, meters per second.
    pub velocity: Vector2<f64>,
}

impl ObstacleBelief {
    /// Advances the center by constant-velocity motion.
    pub fn predicted_center(&self, dt_total: f64) -> Vector2<f64> {
        self.center + self.velocity * dt_total
    }
}

/// Splits the fused total variance into lateral and longitudinal standard
/// deviations. Lateral couples the across-track position and width terms,
/// longitudinal the along-track position and length terms.
pub fn lateral_longitudinal_sigma(var_total: &[f64; 7]) -> Result<(f64, f64)> {
    for &v in var_total {
        if v < 0.0 {
            return Err(Error::NegativeInput {
                what: "variance element",
                value: v,
            });
        }
    }
    let sigma_lat = (var_total[X_IDX] + var_total[W_IDX]).sqrt();
    let sigma_lon = (var_total[Y_IDX] + var_total[L_IDX]).sqrt();
    Ok((sigma_lat, sigma_lon))
}

/// Margins covering the corner sweep of a `w x l` box whose heading is
/// uncertain with standard deviation `sigma_theta`.
///
/// The long-axis margin is the distance from the box front face to the
/// supporting line of the rotated box; the short-axis margin scales it by
/// the aspect ratio. Both are zero for a square box and clamped at zero
/// when the aspect ratio makes the raw expression negative.
pub fn orientation_margins(w: f64, l: f64, sigma_theta: f64) -> Result<(f64, f64)> {
    if w <= 0.0 || w.is_nan() {
        return Err(Error::NegativeInput { what: "box width", value: w });
    }
    if l <= 0.0 || l.is_nan() {
        return Err(Error::NegativeInput { what: "box length", value: l });
    }
    if sigma_theta < 0.0 {
        return Err(Error::NegativeInput {
            what: "yaw standard deviation",
            value: sigma_theta,
        });
    }
    if sigma_theta >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::YawSigmaOutOfRange(sigma_theta));
    }
    let t2 = sigma_theta.tan().powi(2);
    let ratio = ((1.0 + t2) / (w * w + l * l * t2)).sqrt();
    let delta_a = (0.5 * l * (1.0 - w * ratio)).max(0.0);
    let delta_b = w / l * delta_a;
    Ok((delta_a, delta_b))
}

/// Builds the planar obstacle from a fused belief.
///
/// The covariance aligns its major axis with the heading:
/// `R(theta) * diag((sigma_lon + da)^2, (sigma_lat + db)^2) * R(theta)^T`,
/// with the longitudinal term along the heading.
pub fn make_obstacle_belief(
    belief: &DetectionBelief,
    velocity: Vector2<f64>,
) -> Result<ObstacleBelief> {
    let mean = belief.mean;
    let (sigma_lat, sigma_lon) = lateral_longitudinal_sigma(&belief.var_total)?;
    let sigma_theta = belief.var_total[THETA_IDX].sqrt();
    let (delta_a, delta_b) = orientation_margins(mean.w, mean.l, sigma_theta)?;

    let half_length = 0.5 * mean.l;
    let half_width = 0.5 * mean.w;
    let semi_axis_a = half_length + sigma_lon + delta_a;
    let semi_axis_b = half_width + sigma_lat + delta_b;

    let rot = Rotation2::new(mean.theta);
    let diag = Matrix2::new(
        (sigma_lon + delta_a).powi(2),
        0.0,
        0.0,
        (sigma_lat + delta_b).powi(2),
    );
    let covariance = rot.matrix() * diag * rot.matrix().transpose();

    Ok(ObstacleBelief {
        center: Vector2::new(mean.x, mean.y),
        heading: mean.theta,
        half_length,
        half_width,
        semi_axis_a,
        semi_axis_b,
        covariance,
        velocity,
    })
}

/// Thresholds for the class-uncertainty filter, nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterThresholds {
    pub pe_max: f64,
    pub mi_max: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        // Half / quarter of the two-class entropy maximum. Confident real
        // detections sit well below both; split votes blow through either.
        Self {
            pe_max: 0.5 * 2f64.ln(),
            mi_max: 0.25 * 2f64.ln(),
        }
    }
}

/// Keeps only beliefs whose class uncertainty stays at or below both
/// thresholds. Equality passes.
pub fn filter_misdetections(
    beliefs: Vec<DetectionBelief>,
    thresholds: FilterThresholds,
) -> Vec<DetectionBelief> {
    beliefs
        .into_iter()
        .filter(|b| {
            b.predictive_entropy <= thresholds.pe_max && b.mutual_information <= thresholds.mi_max
        })
        .collect()
}
