//! Fusion of stochastic detector samples into quantified uncertainty.
//!
//! A detector produces `T` stochastic forward passes per object. Each pass
//! carries a 7-parameter box, a per-element log-variance (the predicted
//! observation-noise variance) and a class-score vector. This module fuses
//! those passes into a single belief:
//!
//! - epistemic variance: spread of the box parameters across passes,
//! - aleatoric variance: mean of the per-pass predicted variances,
//! - predictive entropy / mutual information over the class scores.
//!
//! It also provides the attenuated regression loss used to train the
//! aleatoric head, exposed as a standalone numeric function with gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalize_angle;

/// Number of box parameters: x, y, z, h, w, l, theta.
pub const BOX_DIM: usize = 7;

/// Index of the yaw element inside the 7-vector layout.
pub const THETA_IDX: usize = 6;

/// A 7-parameter 3D bounding box.
///
/// Positions and extents in meters, yaw in radians normalized to `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxParams {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub h: f64,
    pub w: f64,
    pub l: f64,
    pub theta: f64,
}

impl BoxParams {
    pub fn as_array(&self) -> [f64; BOX_DIM] {
        [self.x, self.y, self.z, self.h, self.w, self.l, self.theta]
    }

    pub fn from_array(v: [f64; BOX_DIM]) -> Self {
        Self {
            x: v[0],
            y: v[1],
            z: v[2],
            h: v[3],
            w: v[4],
            l: v[5],
            theta: normalize_angle(v[6]),
        }
    }

    /// Checks the positivity and yaw-range invariants.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("h", self.h), ("w", self.w), ("l", self.l)] {
            if v <= 0.0 || v.is_nan() {
                return Err(Error::Inconsistency(format!(
                    "box extent {name} must be positive, got {v}"
                )));
            }
        }
        if !(self.theta > -std::f64::consts::PI - 1e-12
            && self.theta <= std::f64::consts::PI + 1e-12)
        {
            return Err(Error::Inconsistency(format!(
                "yaw {} outside (-pi, pi]",
                self.theta
            )));
        }
        Ok(())
    }
}

/// One stochastic forward pass of the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSample {
    pub box_params: BoxParams,
    /// Natural log of the predicted aleatoric variance per box element.
    pub log_variance: [f64; BOX_DIM],
    /// Probability vector over classes; sums to one.
    pub class_scores: Vec<f64>,
}

impl DetectionSample {
    pub fn validate(&self) -> Result<()> {
        self.box_params.validate()?;
        if self.log_variance.iter().any(|v| !v.is_finite()) {
            return Err(Error::Inconsistency("non-finite log-variance".into()));
        }
        let sum: f64 = self.class_scores.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.class_scores.iter().any(|&p| !(0.0..=1.0).contains(&p))
        {
            return Err(Error::Inconsistency(format!(
                "class scores not a probability vector (sum {sum})"
            )));
        }
        Ok(())
    }
}

/// The fused belief over one detected object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionBelief {
    pub mean: BoxParams,
    pub var_epistemic: [f64; BOX_DIM],
    pub var_aleatoric: [f64; BOX_DIM],
    pub var_total: [f64; BOX_DIM],
    /// Entropy of the mean class distribution, nats.
    pub predictive_entropy: f64,
    /// Predictive entropy minus mean per-pass entropy, nats.
    pub mutual_information: f64,
    pub sample_count: usize,
}

fn require_nonempty(samples: &[DetectionSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let c = samples[0].class_scores.len();
    for s in &samples[1..] {
        if s.class_scores.len() != c {
            return Err(Error::LengthMismatch {
                left: c,
                right: s.class_scores.len(),
            });
        }
    }
    Ok(())
}

/// Elementwise mean box over the passes. Yaw is fused by circular mean
/// (atan2 of the averaged sin/cos) to avoid the wraparound discontinuity.
pub fn predictive_mean(samples: &[DetectionSample]) -> Result<BoxParams> {
    require_nonempty(samples)?;
    let t = samples.len() as f64;
    let mut acc = [0.0; BOX_DIM];
    let (mut sin_sum, mut cos_sum) = (0.0, 0.0);
    for s in samples {
        let v = s.box_params.as_array();
        for (a, x) in acc.iter_mut().zip(v.iter()) {
            *a += x;
        }
        sin_sum += v[THETA_IDX].sin();
        cos_sum += v[THETA_IDX].cos();
    }
    for a in acc.iter_mut() {
        *a /= t;
    }
    acc[THETA_IDX] = normalize_angle((sin_sum / t).atan2(cos_sum / t));
    Ok(BoxParams::from_array(acc))
}

/// Population variance of the passes split into epistemic and aleatoric parts.
///
/// Epistemic: `E[y^2] - E[y]^2` over the passes, elementwise, evaluated
/// in the cancellation-free two-pass form `E[(y - E[y])^2]`; the yaw
/// element measures angular deviations from the circular mean. Aleatoric:
/// mean of `exp(log_variance)`. Total is their sum.
pub fn predictive_variance(
    samples: &[DetectionSample],
) -> Result<([f64; BOX_DIM], [f64; BOX_DIM], [f64; BOX_DIM])> {
    let mean = predictive_mean(samples)?.as_array();
    let t = samples.len() as f64;
    let mut epi = [0.0; BOX_DIM];
    let mut alea = [0.0; BOX_DIM];
    for s in samples {
        let v = s.box_params.as_array();
        for d in 0..BOX_DIM {
            let dev = if d == THETA_IDX {
                normalize_angle(v[d] - mean[d])
            } else {
                v[d] - mean[d]
            };
            epi[d] += dev * dev;
            alea[d] += s.log_variance[d].exp();
        }
    }
    let mut total = [0.0; BOX_DIM];
    for d in 0..BOX_DIM {
        epi[d] /= t;
        alea[d] /= t;
        total[d] = epi[d] + alea[d];
    }
    Ok((epi, alea, total))
}

fn entropy(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.ln())
        .sum()
}

/// Entropy of the mean class distribution across passes, in nats.
pub fn predictive_entropy(samples: &[DetectionSample]) -> Result<f64> {
    require_nonempty(samples)?;
    let t = samples.len() as f64;
    let c = samples[0].class_scores.len();
    let mut mean = vec![0.0; c];
    for s in samples {
        for (m, p) in mean.iter_mut().zip(s.class_scores.iter()) {
            *m += p / t;
        }
    }
    // min() trims floating-point overshoot above the ln(C) maximum.
    Ok(entropy(&mean).min((c as f64).ln()))
}

/// Predictive entropy minus the mean per-pass entropy, clamped at zero.
///
/// High when the passes disagree with each other, which is the signature
/// of a mis-detection.
pub fn mutual_information(samples: &[DetectionSample]) -> Result<f64> {
    let pe = predictive_entropy(samples)?;
    let t = samples.len() as f64;
    let mean_h: f64 = samples.iter().map(|s| entropy(&s.class_scores)).sum::<f64>() / t;
    Ok((pe - mean_h).max(0.0).min(pe))
}

/// Attenuated regression loss and its gradient with respect to the
/// log-variances.
///
/// `loss = (1/D) sum_d [ exp(-lambda_d) * delta_d^2 / 2 + lambda_d / 2 ]`.
/// The per-element stationary point sits at `lambda_d = ln(delta_d^2)`.
pub fn attenuated_loss(residuals: &[f64], log_vars: &[f64]) -> Result<(f64, Vec<f64>)> {
    if residuals.len() != log_vars.len() {
        return Err(Error::LengthMismatch {
            left: residuals.len(),
            right: log_vars.len(),
        });
    }
    if residuals.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    if residuals.iter().chain(log_vars.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Inconsistency("non-finite loss input".into()));
    }
    let d = residuals.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(residuals.len());
    for (&r, &lv) in residuals.iter().zip(log_vars.iter()) {
        let attenuation = (-lv).exp();
        loss += 0.5 * attenuation * r * r + 0.5 * lv;
        grad.push((-0.5 * attenuation * r * r + 0.5) / d);
    }
    Ok((loss / d, grad))
}

/// Fuses a full sample set into a [`DetectionBelief`].
pub fn fuse(samples: &[DetectionSample]) -> Result<DetectionBelief> {
    let mean = predictive_mean(samples)?;
    let (var_epistemic, var_aleatoric, var_total) = predictive_variance(samples)?;
    let predictive_entropy = predictive_entropy(samples)?;
    let mutual_information = mutual_information(samples)?;
    Ok(DetectionBelief {
        mean,
        var_epistemic,
        var_aleatoric,
        var_total,
        predictive_entropy,
        mutual_information,
        sample_count: samples.len(),
    })
}
