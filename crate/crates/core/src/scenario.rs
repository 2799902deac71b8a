//! Scenario files: road geometry, actors, sensor and planner settings.
//!
//! Scenarios are JSON with a strict schema — unknown fields are rejected
//! so a typo in a config cannot silently fall back to defaults. The
//! parsed form converts into the runtime configs the planner consumes.

use std::path::Path;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::dynamics::{EgoState, MotionConfig};
use crate::error::{Error, Result};
use crate::perception::{GroundTruthObstacle, SensorNoiseProfile};
use crate::planner::{Mode, PlannerConfig, SampleRegion};
use crate::risk::{ErfImpl, RiskConfig};

/// A straight multi-lane road along +x: drivable y spans
/// `[0, lane_count * lane_width]`, x spans `[0, length]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneGeometry {
    pub lane_count: usize,
    pub lane_width: f64,
    pub length: f64,
}

impl LaneGeometry {
    pub fn road_width(&self) -> f64 {
        self.lane_count as f64 * self.lane_width
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.length).contains(&x) && (0.0..=self.road_width()).contains(&y)
    }

    /// Center line y of a zero-based lane index.
    pub fn lane_center(&self, lane: usize) -> f64 {
        (lane as f64 + 0.5) * self.lane_width
    }
}

impl Default for LaneGeometry {
    fn default() -> Self {
        Self {
            lane_count: 3,
            lane_width: 3.6,
            length: 120.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EgoStart {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl Default for EgoStart {
    fn default() -> Self {
        Self { x: 5.0, y: 1.8, heading: 0.0, speed: 6.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Goal {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

impl Goal {
    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

/// Motion settings in plain numbers (covariances given as standard
/// deviations and expanded into matrices at conversion time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionSection {
    pub wheelbase: f64,
    pub ego_length: f64,
    pub ego_width: f64,
    pub dt: f64,
    /// Positional drift std per root-second, meters.
    pub process_noise_std: f64,
    /// Initial positional std at each replan, meters.
    pub initial_sigma: f64,
    pub lookahead: f64,
    pub v_max: f64,
    pub steer_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub cruise_speed: f64,
    pub goal_tolerance: f64,
    pub max_steps: usize,
}

impl Default for MotionSection {
    fn default() -> Self {
        let d = MotionConfig::default();
        Self {
            wheelbase: d.wheelbase,
            ego_length: d.ego_length,
            ego_width: d.ego_width,
            dt: d.dt,
            process_noise_std: 0.02,
            initial_sigma: 0.1,
            lookahead: d.lookahead,
            v_max: d.v_max,
            steer_max: d.steer_max,
            a_min: d.a_min,
            a_max: d.a_max,
            cruise_speed: d.cruise_speed,
            goal_tolerance: d.goal_tolerance,
            max_steps: d.max_steps,
        }
    }
}

impl MotionSection {
    pub fn to_motion_config(&self) -> Result<MotionConfig> {
        if self.dt <= 0.0 || self.dt.is_nan() {
            return Err(Error::Scenario(format!(
                "motion.dt must be positive, got {}",
                self.dt
            )));
        }
        if self.process_noise_std < 0.0 || self.initial_sigma < 0.0 {
            return Err(Error::Scenario(
                "motion noise standard deviations must be non-negative".into(),
            ));
        }
        Ok(MotionConfig {
            wheelbase: self.wheelbase,
            ego_length: self.ego_length,
            ego_width: self.ego_width,
            dt: self.dt,
            process_noise: Matrix2::from_diagonal_element(
                self.process_noise_std.powi(2) * self.dt,
            ),
            initial_covariance: Matrix2::from_diagonal_element(self.initial_sigma.powi(2)),
            lookahead: self.lookahead,
            v_max: self.v_max,
            steer_max: self.steer_max,
            a_min: self.a_min,
            a_max: self.a_max,
            cruise_speed: self.cruise_speed,
            goal_tolerance: self.goal_tolerance,
            max_steps: self.max_steps,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

/// Planner and risk settings as stored in the file. The planning mode is
/// not part of the scenario — it is chosen per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSection {
    pub p_safe: f64,
    pub k_cc: f64,
    pub k_dist: f64,
    pub candidates: usize,
    pub max_iterations: usize,
    /// Wall-clock expansion budget, seconds; batch runs ignore it and
    /// rely on max_iterations so results stay reproducible.
    pub expansion_interval: f64,
    /// Sampling bounds; defaults to the drivable region.
    pub sample_region: Option<RegionSection>,
    pub cc_fixed_sigma: f64,
    pub erf_method: ErfMethodSection,
    pub goal_bias: f64,
    pub replan_horizon: f64,
    pub node_interval: f64,
    pub max_cycles: usize,
}

impl Default for PlannerSection {
    fn default() -> Self {
        Self {
            p_safe: 0.99,
            k_cc: 100.0,
            k_dist: 1.0,
            candidates: 15,
            max_iterations: 200,
            expansion_interval: 3.0,
            sample_region: None,
            cc_fixed_sigma: 0.8,
            erf_method: ErfMethodSection::Rational,
            goal_bias: 0.05,
            replan_horizon: 1.0,
            node_interval: 0.5,
            max_cycles: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErfMethodSection {
    Rational,
    LookupTable,
}

/// A full scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub lanes: LaneGeometry,
    #[serde(default)]
    pub ego: EgoStart,
    pub goal: Goal,
    #[serde(default)]
    pub obstacles: Vec<GroundTruthObstacle>,
    #[serde(default)]
    pub sensor: SensorNoiseProfile,
    #[serde(default)]
    pub motion: MotionSection,
    #[serde(default)]
    pub planner: PlannerSection,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
}

fn default_trials() -> usize {
    1
}

/// The runtime form: everything `execute` needs, types resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub lanes: LaneGeometry,
    pub ego_start: EgoState,
    pub goal: Goal,
    pub truth: Vec<GroundTruthObstacle>,
    pub sensor: SensorNoiseProfile,
    pub motion: MotionConfig,
    pub planner: PlannerConfig,
    pub risk: RiskConfig,
    pub trials: usize,
    pub base_seed: u64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Scenario("trials must be at least 1".into()));
        }
        if self.goal.radius <= 0.0 || self.goal.radius.is_nan() {
            return Err(Error::Scenario(format!(
                "goal.radius must be positive, got {}",
                self.goal.radius
            )));
        }
        if !self.lanes.contains(self.goal.x, self.goal.y) {
            return Err(Error::Scenario(format!(
                "goal ({}, {}) lies outside the drivable region",
                self.goal.x, self.goal.y
            )));
        }
        if self.lanes.lane_count == 0 || self.lanes.lane_width <= 0.0 || self.lanes.length <= 0.0 {
            return Err(Error::Scenario("lanes must have positive extent".into()));
        }
        for ob in &self.obstacles {
            ob.validate()?;
        }
        self.sensor.validate()?;
        let p = &self.planner;
        if !(p.p_safe > 0.0 && p.p_safe < 1.0) {
            return Err(Error::Scenario(format!(
                "planner.p_safe {} outside (0, 1)",
                p.p_safe
            )));
        }
        if p.candidates < 1 {
            return Err(Error::Scenario("planner.candidates must be >= 1".into()));
        }
        if p.k_cc < 0.0 || p.k_dist < 0.0 || (p.k_cc == 0.0 && p.k_dist == 0.0) {
            return Err(Error::Scenario(
                "planner cost weights must be non-negative and not both zero".into(),
            ));
        }
        if !(0.0..=1.0).contains(&p.goal_bias) {
            return Err(Error::Scenario(format!(
                "planner.goal_bias {} outside [0, 1]",
                p.goal_bias
            )));
        }
        Ok(())
    }

    /// Builds the runtime scenario for one planning mode.
    pub fn into_runtime(&self, mode: Mode) -> Result<Scenario> {
        self.validate()?;
        let motion = self.motion.to_motion_config()?;
        let region = match &self.planner.sample_region {
            Some(r) => SampleRegion {
                x_min: r.x_min,
                x_max: r.x_max,
                y_min: r.y_min,
                y_max: r.y_max,
            },
            None => SampleRegion {
                x_min: 0.0,
                x_max: self.lanes.length,
                y_min: 0.0,
                y_max: self.lanes.road_width(),
            },
        };
        if !(region.x_min < region.x_max && region.y_min < region.y_max) {
            return Err(Error::Scenario("sample_region must have positive area".into()));
        }
        let erf = match self.planner.erf_method {
            ErfMethodSection::Rational => ErfImpl::rational(),
            ErfMethodSection::LookupTable => ErfImpl::table(1e-3)?,
        };
        let risk = RiskConfig {
            p_safe: self.planner.p_safe,
            erf,
        };
        risk.validate()?;
        let planner = PlannerConfig {
            mode,
            k_cc: self.planner.k_cc,
            k_dist: self.planner.k_dist,
            candidates: self.planner.candidates,
            max_iterations: self.planner.max_iterations,
            expansion_interval: self.planner.expansion_interval,
            goal_radius: self.goal.radius,
            sample_region: region,
            cc_fixed_sigma: self.planner.cc_fixed_sigma,
            seed: self.base_seed,
            goal_bias: self.planner.goal_bias,
            replan_horizon: self.planner.replan_horizon,
            node_interval: self.planner.node_interval,
            max_cycles: self.planner.max_cycles,
        };
        Ok(Scenario {
            name: self.name.clone(),
            lanes: self.lanes,
            ego_start: EgoState {
                x: self.ego.x,
                y: self.ego.y,
                heading: self.ego.heading,
                speed: self.ego.speed,
            },
            goal: self.goal,
            truth: self.obstacles.clone(),
            sensor: self.sensor,
            motion,
            planner,
            risk,
            trials: self.trials,
            base_seed: self.base_seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "smoke",
        "goal": { "x": 100.0, "y": 5.4, "radius": 2.0 }
    }"#;

    #[test]
    fn minimal_scenario_parses_with_defaults() {
        let cfg = ScenarioConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.trials, 1);
        assert_eq!(cfg.lanes.lane_count, 3);
        assert_eq!(cfg.sensor.samples_per_detection, 6);
        cfg.validate().unwrap();
        let rt = cfg.into_runtime(Mode::Pu).unwrap();
        assert_eq!(rt.planner.sample_region.x_max, 120.0);
        assert!((rt.planner.sample_region.y_max - 10.8).abs() < 1e-12);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = r#"{
            "name": "x",
            "goal": { "x": 10.0, "y": 5.0, "radius": 2.0 },
            "goall_radius": 3.0
        }"#;
        let err = ScenarioConfig::from_json(bad).unwrap_err();
        assert!(err.to_string().contains("goall_radius"), "{err}");

        let bad_nested = r#"{
            "name": "x",
            "goal": { "x": 10.0, "y": 5.0, "radius": 2.0 },
            "sensor": { "sigma_zero": 0.1 }
        }"#;
        let err = ScenarioConfig::from_json(bad_nested).unwrap_err();
        assert!(err.to_string().contains("sigma_zero"), "{err}");
    }

    #[test]
    fn missing_required_field_names_it() {
        let err = ScenarioConfig::from_json(r#"{ "name": "x" }"#).unwrap_err();
        assert!(err.to_string().contains("goal"), "{err}");
    }

    #[test]
    fn goal_outside_road_is_rejected() {
        let bad = r#"{
            "name": "x",
            "goal": { "x": 100.0, "y": 25.0, "radius": 2.0 }
        }"#;
        let cfg = ScenarioConfig::from_json(bad).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("drivable"), "{err}");
    }

    #[test]
    fn zero_trials_rejected() {
        let bad = r#"{
            "name": "x",
            "goal": { "x": 100.0, "y": 5.0, "radius": 2.0 },
            "trials": 0
        }"#;
        let cfg = ScenarioConfig::from_json(bad).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn lane_centers() {
        let lanes = LaneGeometry::default();
        assert!((lanes.lane_center(0) - 1.8).abs() < 1e-12);
        assert!((lanes.lane_center(2) - 9.0).abs() < 1e-12);
        assert!(lanes.contains(0.0, 0.0));
        assert!(!lanes.contains(-1.0, 0.0));
        assert!(!lanes.contains(10.0, 11.0));
    }

    #[test]
    fn obstacle_dimension_validation_surfaces_id() {
        let bad = r#"{
            "name": "x",
            "goal": { "x": 100.0, "y": 5.0, "radius": 2.0 },
            "obstacles": [ { "id": 7, "x": 30.0, "y": 5.0, "h": 1.5, "w": 0.0, "l": 4.0 } ]
        }"#;
        let cfg = ScenarioConfig::from_json(bad).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains('7'), "{err}");
    }

    #[test]
    fn roundtrips_through_serde() {
        let cfg = ScenarioConfig::from_json(MINIMAL).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let again = ScenarioConfig::from_json(&text).unwrap();
        assert_eq!(cfg, again);
    }
}
