//! Analytic collision-risk bound and its Monte Carlo validation oracle.
//!
//! Collision between the ego footprint and an uncertain obstacle is
//! bounded face by face: the probability that the obstacle center falls
//! on the inner side of any single footprint face upper-bounds the
//! probability that it falls inside the whole footprint, so the minimum
//! over the four faces is the tightest such bound. Each face test is a
//! one-dimensional Gaussian tail, hence the error function. Per-obstacle
//! bounds add up (union bound) into the per-step risk that the planner
//! compares against its safety threshold.
//!
//! The obstacle's own physical extent enters by pushing every face
//! outward by the obstacle box's support along that face normal — a
//! Minkowski-sum approximation; the stochastic part stays entirely in the
//! covariance term.

mod erf;

pub use erf::{erf_rational, ErfImpl, ErfTable};

use nalgebra::{Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::HalfPlaneSet;
use crate::error::{Error, Result};
use crate::spatial::ObstacleBelief;

/// Variance below this along a face normal is treated as deterministic.
const DEGENERATE_VARIANCE: f64 = 1e-15;

/// Safety threshold and erf evaluation method.
#[derive(Debug, Clone)]
pub struct RiskConfig {
    /// Required per-step probability of staying collision-free, in (0, 1).
    pub p_safe: f64,
    pub erf: ErfImpl,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            p_safe: 0.99,
            erf: ErfImpl::rational(),
        }
    }
}

impl RiskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_safe > 0.0 && self.p_safe < 1.0) {
            return Err(Error::Inconsistency(format!(
                "p_safe {} outside (0, 1)",
                self.p_safe
            )));
        }
        Ok(())
    }

    /// The risk budget per step: a planning state is admissible while the
    /// total risk stays strictly below this.
    pub fn risk_budget(&self) -> f64 {
        1.0 - self.p_safe
    }
}

/// Probability that a Gaussian point `N(z, cov_total)` satisfies
/// `a . p < b`, i.e. sits on the inner side of one face.
///
/// Evaluates `(1 - erf(m / sqrt(2 v))) / 2` with margin `m = a.z - b` and
/// directional variance `v = a' cov_total a`. A degenerate variance falls
/// back to the deterministic indicator (boundary counts 1/2).
pub fn constraint_satisfaction_prob(
    a: &Vector2<f64>,
    b: f64,
    z: &Vector2<f64>,
    cov_total: &Matrix2<f64>,
    cfg: &RiskConfig,
) -> Result<f64> {
    let var = (cov_total * a).dot(a);
    if var < -1e-12 {
        return Err(Error::NotPsd(var));
    }
    let margin = a.dot(z) - b;
    if var <= DEGENERATE_VARIANCE {
        return Ok(if margin < 0.0 {
            1.0
        } else if margin > 0.0 {
            0.0
        } else {
            0.5
        });
    }
    let p = 0.5 * (1.0 - cfg.erf.eval(margin / (2.0 * var).sqrt()));
    Ok(p.clamp(0.0, 1.0))
}

/// Unit directions of the obstacle box axes.
fn obstacle_axes(obstacle: &ObstacleBelief) -> (Vector2<f64>, Vector2<f64>) {
    let u = Vector2::new(obstacle.heading.cos(), obstacle.heading.sin());
    let v = Vector2::new(-obstacle.heading.sin(), obstacle.heading.cos());
    (u, v)
}

/// Support of the obstacle's deterministic box along direction `a`.
fn obstacle_support(obstacle: &ObstacleBelief, a: &Vector2<f64>) -> f64 {
    let (u, v) = obstacle_axes(obstacle);
    obstacle.half_length * a.dot(&u).abs() + obstacle.half_width * a.dot(&v).abs()
}

/// Upper bound on the probability that the obstacle collides with the
/// ego footprint: minimum over the four faces of the single-face
/// probability, with each face pushed outward by the obstacle's extent.
pub fn collision_prob_obstacle(
    polygon: &HalfPlaneSet,
    obstacle: &ObstacleBelief,
    ego_cov: &Matrix2<f64>,
    cfg: &RiskConfig,
) -> Result<f64> {
    let cov_total = obstacle.covariance + ego_cov;
    let mut best = 1.0f64;
    for face in &polygon.faces {
        let inflated = face.offset + obstacle_support(obstacle, &face.normal);
        let p = constraint_satisfaction_prob(
            &face.normal,
            inflated,
            &obstacle.center,
            &cov_total,
            cfg,
        )?;
        best = best.min(p);
    }
    Ok(best)
}

/// Total per-step risk: union bound over obstacles, clamped at 1.
pub fn total_risk(
    polygon: &HalfPlaneSet,
    ego_cov: &Matrix2<f64>,
    obstacles: &[ObstacleBelief],
    cfg: &RiskConfig,
) -> Result<f64> {
    let mut sum = 0.0;
    for ob in obstacles {
        sum += collision_prob_obstacle(polygon, ob, ego_cov, cfg)?;
    }
    Ok(sum.min(1.0))
}

/// True while the risk stays strictly below the budget `1 - p_safe`.
pub fn check_chance_constraint(delta_t: f64, cfg: &RiskConfig) -> bool {
    delta_t < cfg.risk_budget()
}

/// Samples a bivariate normal through the eigendecomposition of the
/// covariance; negative eigenvalues from round-off collapse to zero, so a
/// singular covariance degrades gracefully to its point-mass directions.
struct GaussianSampler {
    mean: Vector2<f64>,
    transform: Matrix2<f64>,
}

impl GaussianSampler {
    fn new(mean: Vector2<f64>, cov: &Matrix2<f64>) -> Result<Self> {
        let sym = (cov + cov.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let min_eig = eig.eigenvalues.min();
        if min_eig < -1e-9 {
            return Err(Error::NotPsd(min_eig));
        }
        let scaled = Matrix2::from_columns(&[
            eig.eigenvectors.column(0) * eig.eigenvalues[0].max(0.0).sqrt(),
            eig.eigenvectors.column(1) * eig.eigenvalues[1].max(0.0).sqrt(),
        ]);
        Ok(Self {
            mean,
            transform: scaled,
        })
    }

    fn draw(&self, rng: &mut ChaCha20Rng) -> Vector2<f64> {
        let xi = Vector2::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        self.mean + self.transform * xi
    }
}

/// Monte Carlo estimate of the collision probability the analytic bound
/// approximates: the chance that an obstacle center drawn from its
/// combined Gaussian lands inside the extent-inflated footprint.
///
/// Returns the hit fraction and its binomial standard error; boundary
/// contact counts as a hit (conservative, matching the strict-interior
/// convention of the footprint). Deterministic for a given seed.
pub fn mc_collision_oracle(
    polygon: &HalfPlaneSet,
    obstacle: &ObstacleBelief,
    ego_cov: &Matrix2<f64>,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n < 1000 {
        return Err(Error::Inconsistency(format!(
            "Monte Carlo oracle needs at least 1000 samples, got {n}"
        )));
    }
    let cov_total = obstacle.covariance + ego_cov;
    let sampler = GaussianSampler::new(obstacle.center, &cov_total)?;
    let supports: Vec<f64> = polygon
        .faces
        .iter()
        .map(|f| f.offset + obstacle_support(obstacle, &f.normal))
        .collect();

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n {
        let p = sampler.draw(&mut rng);
        let inside = polygon
            .faces
            .iter()
            .zip(&supports)
            .all(|(f, &b)| f.normal.dot(&p) <= b);
        if inside {
            hits += 1;
        }
    }
    let est = hits as f64 / n as f64;
    let stderr = (est * (1.0 - est) / n as f64).sqrt();
    Ok((est, stderr))
}
