//! Risk-bounded motion planning under fused perception and motion uncertainty.
//!
//! The crate covers the full pipeline of a 2D driving bench:
//!
//! - [`uncertainty`] fuses stochastic detector outputs into epistemic,
//!   aleatoric and total variances plus classification uncertainty metrics.
//! - [`spatial`] converts a fused detection into a planar obstacle with
//!   uncertainty-inflated extents and a positional covariance, and filters
//!   suspected mis-detections by entropy / mutual information.
//! - [`dynamics`] simulates the ego vehicle (kinematic bicycle plus a
//!   pure-pursuit steering law) and propagates positional covariance.
//! - [`risk`] evaluates an analytic upper bound on the collision probability
//!   between the uncertain ego footprint and uncertain obstacles, with a
//!   Monte Carlo oracle for validation.
//! - [`planner`] grows a chance-constrained search tree (PU mode) and runs
//!   the replanning execution loop, with fixed-uncertainty (CC) and
//!   uncertainty-blind (CL) baseline modes.
//! - [`perception`] is a seeded stand-in for the detector: per-obstacle
//!   sample sets whose noise grows with range and azimuth, plus clutter.
//! - [`scenario`] and [`harness`] load scenario files, run seeded batches
//!   across planner modes and emit CSV / SVG / JSONL reports.

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod perception;
pub mod planner;
pub mod risk;
pub mod scenario;
pub mod spatial;
pub mod uncertainty;

pub use error::{Error, Result};

/// Normalizes an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}
