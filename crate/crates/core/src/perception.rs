//! Simulated stochastic object detector.
//!
//! Stands in for a dropout-sampled neural detector: for every visible
//! ground-truth obstacle it emits `T` noisy box samples whose noise grows
//! with range and azimuth, plus per-sample log-variance channels and
//! class scores. Mis-detections come in two flavors: real objects dropped
//! (more often when occluded) and clutter objects injected with
//! deliberately inconsistent class votes so that entropy-based filtering
//! can remove them. Everything is deterministic for a given seed.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::dynamics::EgoState;
use crate::error::{Error, Result};
use crate::normalize_angle;
use crate::uncertainty::{BoxParams, DetectionSample, BOX_DIM};

/// A simulated object on the road, moving at constant velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthObstacle {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
    pub h: f64,
    pub w: f64,
    pub l: f64,
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
}

impl GroundTruthObstacle {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("h", self.h), ("w", self.w), ("l", self.l)] {
            if v <= 0.0 || v.is_nan() {
                return Err(Error::Scenario(format!(
                    "obstacle {}: dimension {name} must be positive, got {v}",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Center advanced by constant-velocity motion.
    pub fn center_at(&self, t: f64) -> Vector2<f64> {
        Vector2::new(self.x + self.vx * t, self.y + self.vy * t)
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.vx, self.vy)
    }

    /// The obstacle advanced to time `t` (center moved, rest unchanged).
    pub fn at_time(&self, t: f64) -> GroundTruthObstacle {
        GroundTruthObstacle {
            x: self.x + self.vx * t,
            y: self.y + self.vy * t,
            ..*self
        }
    }
}

/// Noise law and failure rates of the simulated detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorNoiseProfile {
    /// Stochastic forward passes per detection.
    pub samples_per_detection: usize,
    /// Base position/scale noise, meters.
    pub sigma0: f64,
    /// Noise growth per meter of range.
    pub k_dist: f64,
    /// Noise growth with |sin(relative bearing)|, meters.
    pub k_azimuth: f64,
    /// Base yaw noise, radians.
    pub theta_noise: f64,
    /// Probability of dropping a visible object per frame.
    pub misdetect_rate: f64,
    /// Expected clutter objects per frame (Poisson).
    pub clutter_rate: f64,
    /// Detections beyond this range never appear, meters.
    pub max_range: f64,
}

impl Default for SensorNoiseProfile {
    fn default() -> Self {
        Self {
            samples_per_detection: 6,
            sigma0: 0.05,
            k_dist: 0.01,
            k_azimuth: 0.1,
            theta_noise: 0.01,
            misdetect_rate: 0.02,
            clutter_rate: 0.0,
            max_range: 80.0,
        }
    }
}

impl SensorNoiseProfile {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_detection < 1 {
            return Err(Error::Scenario(
                "sensor: samples_per_detection must be at least 1".into(),
            ));
        }
        for (name, v) in [
            ("sigma0", self.sigma0),
            ("k_dist", self.k_dist),
            ("k_azimuth", self.k_azimuth),
            ("theta_noise", self.theta_noise),
            ("misdetect_rate", self.misdetect_rate),
            ("clutter_rate", self.clutter_rate),
            ("max_range", self.max_range),
        ] {
            if v < 0.0 {
                return Err(Error::Scenario(format!(
                    "sensor: {name} must be non-negative, got {v}"
                )));
            }
        }
        if self.misdetect_rate > 1.0 {
            return Err(Error::Scenario(format!(
                "sensor: misdetect_rate {} exceeds 1",
                self.misdetect_rate
            )));
        }
        Ok(())
    }

    /// Position/scale noise std at range `d` and bearing `phi`.
    fn sigma(&self, d: f64, phi: f64) -> f64 {
        self.sigma0 + self.k_dist * d + self.k_azimuth * phi.sin().abs()
    }

    /// Yaw noise std at range `d`.
    fn sigma_yaw(&self, d: f64) -> f64 {
        self.theta_noise * (1.0 + self.k_dist * d / 10.0)
    }
}

/// Ground-truth origin label used by evaluation code; the planner
/// ignores it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionSource {
    Object(u32),
    Clutter,
}

/// One detected object: the sample set the fusion stage consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub source: DetectionSource,
    pub samples: Vec<DetectionSample>,
}

/// Floor on the variance fed into log-variance channels so that a
/// noiseless sensor still produces finite lambdas.
const LOG_VAR_FLOOR: f64 = 1e-18;

/// Relative jitter applied to the log-variance channel per sample.
const LAMBDA_JITTER: f64 = 0.05;

/// Occlusion multiplies the mis-detection rate by this factor.
const OCCLUSION_PENALTY: f64 = 10.0;

/// Smallest extent a perturbed box may report, meters.
const MIN_EXTENT: f64 = 0.05;

fn ln_var(sigma: f64) -> f64 {
    (sigma * sigma).max(LOG_VAR_FLOOR).ln()
}

/// Liang-Barsky segment-vs-box test in the obstacle's local frame.
fn segment_hits_box(p0: Vector2<f64>, p1: Vector2<f64>, ob: &GroundTruthObstacle) -> bool {
    let c = Vector2::new(ob.x, ob.y);
    let (cos, sin) = (ob.heading.cos(), ob.heading.sin());
    let to_local = |p: Vector2<f64>| {
        let d = p - c;
        Vector2::new(cos * d.x + sin * d.y, -sin * d.x + cos * d.y)
    };
    let a = to_local(p0);
    let b = to_local(p1);
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (da, pa, half) in [
        (d.x, a.x, 0.5 * ob.l),
        (d.y, a.y, 0.5 * ob.w),
    ] {
        if da.abs() < 1e-12 {
            if pa.abs() > half {
                return false;
            }
            continue;
        }
        let mut lo = (-half - pa) / da;
        let mut hi = (half - pa) / da;
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// True when the line of sight from `ego` to obstacle `idx` passes
/// through any other obstacle's box.
fn occluded(ego: Vector2<f64>, truth: &[GroundTruthObstacle], idx: usize) -> bool {
    let target = Vector2::new(truth[idx].x, truth[idx].y);
    truth
        .iter()
        .enumerate()
        .any(|(j, other)| j != idx && segment_hits_box(ego, target, other))
}

/// Simulates one detector frame.
///
/// Real objects within range are dropped with probability
/// `misdetect_rate` (ten-fold when occluded, clamped at 1); survivors get
/// `T` samples perturbed by the range/azimuth noise law. Clutter objects
/// are appended after all real ones, in Poisson number, with widely
/// scattered boxes and per-sample class votes whose argmax flips at
/// random — exactly the signature the entropy filter keys on.
pub fn sense(
    ego: &EgoState,
    truth: &[GroundTruthObstacle],
    profile: &SensorNoiseProfile,
    seed: u64,
) -> Vec<Detection> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let t_samples = profile.samples_per_detection;
    let ego_pos = ego.position();
    let mut out = Vec::new();

    for (idx, ob) in truth.iter().enumerate() {
        let offset = Vector2::new(ob.x, ob.y) - ego_pos;
        let d = offset.norm();
        if d > profile.max_range {
            continue;
        }
        let mut p_miss = profile.misdetect_rate;
        if occluded(ego_pos, truth, idx) {
            p_miss = (p_miss * OCCLUSION_PENALTY).min(1.0);
        }
        if rng.gen::<f64>() < p_miss {
            continue;
        }

        let phi = normalize_angle(offset.y.atan2(offset.x) - ego.heading);
        let sigma = profile.sigma(d, phi);
        let sigma_yaw = profile.sigma_yaw(d);
        let noise = Normal::new(0.0, sigma).expect("sigma >= 0 by validation");
        let yaw_noise = Normal::new(0.0, sigma_yaw).expect("sigma_yaw >= 0 by validation");
        let lam_jitter = Normal::new(0.0, LAMBDA_JITTER).expect("constant std");

        // Confidence in the vehicle class decays gently with range but
        // stays decisive, so real objects survive the entropy filter.
        let p_base = (0.99 - 0.0008 * d).clamp(0.90, 0.99);

        let truth_box = [
            ob.x,
            ob.y,
            0.5 * ob.h,
            ob.h,
            ob.w,
            ob.l,
            ob.heading,
        ];
        let mut samples = Vec::with_capacity(t_samples);
        for _ in 0..t_samples {
            let mut v = truth_box;
            for elem in v.iter_mut().take(6) {
                *elem += noise.sample(&mut rng);
            }
            v[6] = normalize_angle(v[6] + yaw_noise.sample(&mut rng));
            for elem in v.iter_mut().take(6).skip(3) {
                *elem = elem.max(MIN_EXTENT);
            }
            let mut log_variance = [0.0; BOX_DIM];
            for (i, lv) in log_variance.iter_mut().enumerate() {
                let s = if i == 6 { sigma_yaw } else { sigma };
                *lv = ln_var(s) + lam_jitter.sample(&mut rng);
            }
            let p = (p_base + rng.gen_range(-0.005..0.005)).clamp(0.90, 0.995);
            samples.push(DetectionSample {
                box_params: BoxParams::from_array(v),
                log_variance,
                class_scores: vec![p, 1.0 - p],
            });
        }
        out.push(Detection {
            source: DetectionSource::Object(ob.id),
            samples,
        });
    }

    if profile.clutter_rate > 0.0 {
        let poisson = Poisson::new(profile.clutter_rate).expect("positive rate");
        let n_clutter = poisson.sample(&mut rng) as usize;
        for _ in 0..n_clutter {
            out.push(clutter_detection(ego_pos, profile, &mut rng, t_samples));
        }
    }
    out
}

/// Scatter magnitudes for clutter boxes. Yaw scatter stays well below
/// the tan singularity so even unfiltered clutter yields a valid
/// obstacle belief downstream.
const CLUTTER_POS_STD: f64 = 1.5;
const CLUTTER_SCALE_STD: f64 = 0.8;
const CLUTTER_YAW_STD: f64 = 0.3;

fn clutter_detection(
    ego_pos: Vector2<f64>,
    profile: &SensorNoiseProfile,
    rng: &mut ChaCha20Rng,
    t_samples: usize,
) -> Detection {
    let bearing = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let range = rng.gen_range(5.0..profile.max_range.max(5.1));
    let base = [
        ego_pos.x + range * bearing.cos(),
        ego_pos.y + range * bearing.sin(),
        rng.gen_range(0.3..1.5),
        rng.gen_range(0.5..2.5),
        rng.gen_range(0.5..3.0),
        rng.gen_range(0.8..6.0),
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    ];
    let pos_noise = Normal::new(0.0, CLUTTER_POS_STD).expect("constant std");
    let scale_noise = Normal::new(0.0, CLUTTER_SCALE_STD).expect("constant std");
    let yaw_noise = Normal::new(0.0, CLUTTER_YAW_STD).expect("constant std");

    let mut samples = Vec::with_capacity(t_samples);
    for _ in 0..t_samples {
        let mut v = base;
        for elem in v.iter_mut().take(3) {
            *elem += pos_noise.sample(rng);
        }
        for elem in v.iter_mut().take(6).skip(3) {
            *elem = (*elem + scale_noise.sample(rng)).max(MIN_EXTENT);
        }
        v[6] = normalize_angle(v[6] + yaw_noise.sample(rng));

        let mut log_variance = [0.0; BOX_DIM];
        for (i, lv) in log_variance.iter_mut().enumerate() {
            let s = match i {
                0..=2 => CLUTTER_POS_STD,
                6 => CLUTTER_YAW_STD,
                _ => CLUTTER_SCALE_STD,
            };
            *lv = ln_var(s);
        }
        // Class votes flip argmax at random between samples: moderate
        // per-sample confidence, strongly disagreeing directions.
        let confident = rng.gen_range(0.55..0.98);
        let scores = if rng.gen::<bool>() {
            vec![confident, 1.0 - confident]
        } else {
            vec![1.0 - confident, confident]
        };
        samples.push(DetectionSample {
            box_params: BoxParams::from_array(v),
            log_variance,
            class_scores: scores,
        });
    }
    Detection {
        source: DetectionSource::Clutter,
        samples,
    }
}
