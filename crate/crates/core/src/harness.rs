//! Batch experiment harness: seeded trial batteries, aggregate metrics,
//! and report artifacts.
//!
//! A batch runs `trials` independent simulations of one scenario in one
//! planning mode, with trial `i` seeded as `base_seed + i`. Comparing
//! modes on the same scenario and base seed therefore pairs the trials:
//! trial `i` sees the same detector randomness in every mode. Reports
//! consist of a fixed-schema `metrics.csv`, a `trace.jsonl` with one
//! record per planning cycle, and one SVG drawing per trial.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::EgoState;
use crate::error::{Error, Result};
use crate::perception::{sense, GroundTruthObstacle, SensorNoiseProfile};
use crate::planner::{execute, CycleRecord, Mode, RunStatus, RunTrace};
use crate::scenario::{Scenario, ScenarioConfig};
use crate::spatial::lateral_longitudinal_sigma;
use crate::uncertainty::fuse;

/// Environment variable limiting the worker thread count; unset or
/// invalid values use rayon's default.
pub const THREADS_ENV: &str = "CHANCE_RRT_THREADS";

/// Aggregate metrics of one (scenario, mode) batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub mode: Mode,
    /// Fraction of trials where every cycle produced an executable
    /// segment (no deadlock) and the run did not time out.
    pub rate_succ_1: f64,
    /// Fraction of trials reaching the goal without a ground-truth
    /// collision.
    pub rate_succ_2: f64,
    /// Fraction of trials reaching the goal with zero chance-constraint
    /// violations along the executed trajectory.
    pub rate_succ_3: f64,
    /// Largest executed-step risk across all trials.
    pub risk_max: f64,
    /// Mean executed-step risk across all steps of all trials.
    pub risk_avg: f64,
    /// Mean executed waypoint count over goal-reaching trials.
    pub n_waypoints: f64,
    /// Mean executed trajectory length over goal-reaching trials, meters.
    pub traj_length_m: f64,
}

/// Traces plus derived metrics for one mode.
#[derive(Debug, Clone)]
pub struct ModeResult {
    pub mode: Mode,
    pub traces: Vec<RunTrace>,
    pub metrics: RunMetrics,
}

/// Runs a closure inside a rayon pool sized by `CHANCE_RRT_THREADS`
/// (if set to a positive integer), else the default global pool.
fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let requested = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1);
    match requested {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Inconsistency(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Runs all trials of a scenario, trial `i` seeded `base_seed + i`.
/// Trials execute in parallel; the returned traces are in trial order.
pub fn run_batch(scene: &Scenario) -> Result<Vec<RunTrace>> {
    let seeds: Vec<u64> = (0..scene.trials as u64)
        .map(|i| scene.base_seed.wrapping_add(i))
        .collect();
    let traces: Vec<Result<RunTrace>> =
        with_pool(|| seeds.par_iter().map(|&s| execute(scene, s)).collect())?;
    traces.into_iter().collect()
}

/// Reduces a batch of traces to the metric row.
pub fn compute_metrics(mode: Mode, traces: &[RunTrace]) -> RunMetrics {
    let n = traces.len();
    if n == 0 {
        return RunMetrics {
            mode,
            rate_succ_1: 0.0,
            rate_succ_2: 0.0,
            rate_succ_3: 0.0,
            risk_max: 0.0,
            risk_avg: 0.0,
            n_waypoints: 0.0,
            traj_length_m: 0.0,
        };
    }
    let nf = n as f64;
    let succ1 = traces
        .iter()
        .filter(|t| t.deadlock_cycles == 0 && t.status != RunStatus::Timeout)
        .count() as f64;
    let succ2 = traces
        .iter()
        .filter(|t| t.status == RunStatus::GoalReached)
        .count() as f64;
    let succ3 = traces
        .iter()
        .filter(|t| t.status == RunStatus::GoalReached && !t.any_violation())
        .count() as f64;

    let mut risk_max = 0.0f64;
    let mut risk_sum = 0.0f64;
    let mut steps = 0usize;
    for t in traces {
        for s in &t.executed {
            risk_max = risk_max.max(s.risk);
            risk_sum += s.risk;
            steps += 1;
        }
    }
    let risk_avg = if steps > 0 { risk_sum / steps as f64 } else { 0.0 };

    let reached: Vec<&RunTrace> = traces
        .iter()
        .filter(|t| t.status == RunStatus::GoalReached)
        .collect();
    let (n_waypoints, traj_length_m) = if reached.is_empty() {
        (0.0, 0.0)
    } else {
        let m = reached.len() as f64;
        (
            reached.iter().map(|t| t.executed.len() as f64).sum::<f64>() / m,
            reached.iter().map(|t| t.trajectory_length()).sum::<f64>() / m,
        )
    };

    RunMetrics {
        mode,
        rate_succ_1: succ1 / nf,
        rate_succ_2: succ2 / nf,
        rate_succ_3: succ3 / nf,
        risk_max,
        risk_avg,
        n_waypoints,
        traj_length_m,
    }
}

/// Convenience: batch plus metrics.
pub fn summarize(scene: &Scenario) -> Result<ModeResult> {
    let traces = run_batch(scene)?;
    let metrics = compute_metrics(scene.planner.mode, &traces);
    Ok(ModeResult {
        mode: scene.planner.mode,
        traces,
        metrics,
    })
}

/// Fixed column schema of `metrics.csv`.
pub const METRICS_HEADER: &str =
    "mode,rate_succ_1,rate_succ_2,rate_succ_3,risk_max,risk_avg,n_waypoints,traj_length_m";

/// Renders the metrics table. Modes with zero trials contribute no row.
pub fn emit_metrics_csv(results: &[ModeResult]) -> String {
    let mut out = String::new();
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in results {
        if r.traces.is_empty() {
            continue;
        }
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            m.mode,
            m.rate_succ_1,
            m.rate_succ_2,
            m.rate_succ_3,
            m.risk_max,
            m.risk_avg,
            m.n_waypoints,
            m.traj_length_m
        );
    }
    out
}

#[derive(Serialize)]
struct TraceRow<'a> {
    mode: &'static str,
    trial: usize,
    seed: u64,
    status: RunStatus,
    cycle: &'a CycleRecord,
}

/// Renders one JSON line per planning cycle across all modes and trials.
pub fn emit_trace_jsonl(results: &[ModeResult]) -> Result<String> {
    let mut out = String::new();
    for r in results {
        for (trial, trace) in r.traces.iter().enumerate() {
            for cycle in &trace.cycles {
                let row = TraceRow {
                    mode: r.mode.as_str(),
                    trial,
                    seed: trace.trial_seed,
                    status: trace.status,
                    cycle,
                };
                let line = serde_json::to_string(&row)
                    .map_err(|e| Error::Inconsistency(format!("trace encoding: {e}")))?;
                out.push_str(&line);
                out.push('\n');
            }
        }
    }
    Ok(out)
}

fn svg_oriented_rect(x: f64, y: f64, heading: f64, hl: f64, hw: f64, style: &str) -> String {
    format!(
        concat!(
            r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" "#,
            r#"transform="translate({:.3} {:.3}) rotate({:.3})" {}/>"#
        ),
        -hl,
        -hw,
        2.0 * hl,
        2.0 * hw,
        x,
        y,
        heading.to_degrees(),
        style
    )
}

/// Draws one trial: road and lane markings, ground-truth boxes (solid at
/// start, dashed at the final simulated time when moving), the last
/// perceived obstacle boxes with their uncertainty ellipses at the
/// inflated semi-axes, the goal disc, and the executed trajectory.
pub fn render_trial_svg(cfg: &ScenarioConfig, trace: &RunTrace) -> String {
    let road_w = cfg.lanes.road_width();
    let length = cfg.lanes.length;
    let pad = 3.0;
    let vb_w = length + 2.0 * pad;
    let vb_h = road_w + 2.0 * pad;
    let mut s = String::new();
    let _ = writeln!(
        s,
        concat!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{:.3} {:.3} {:.3} {:.3}" "#,
            r#"width="{:.0}" height="{:.0}">"#
        ),
        -pad,
        -(road_w + pad),
        vb_w,
        vb_h,
        vb_w * 10.0,
        vb_h * 10.0
    );
    // Flip the y axis so +y points up.
    let _ = writeln!(s, r#"<g transform="scale(1,-1)">"#);
    let _ = writeln!(
        s,
        r##"<rect x="0" y="0" width="{length:.3}" height="{road_w:.3}" fill="#d9d9d9"/>"##
    );
    for k in 0..=cfg.lanes.lane_count {
        let y = k as f64 * cfg.lanes.lane_width;
        let edge = k == 0 || k == cfg.lanes.lane_count;
        let _ = writeln!(
            s,
            concat!(
                r#"<line x1="0" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="{}" "#,
                r#"stroke-width="0.12"{}/>"#
            ),
            y,
            length,
            y,
            if edge { "#333333" } else { "#ffffff" },
            if edge { "" } else { r#" stroke-dasharray="1.2 1.2""# }
        );
    }
    let _ = writeln!(
        s,
        concat!(
            r##"<circle cx="{:.3}" cy="{:.3}" r="{:.3}" fill="none" stroke="#2a9d2a" "##,
            r#"stroke-width="0.15"/>"#
        ),
        cfg.goal.x, cfg.goal.y, cfg.goal.radius
    );
    let final_time = trace.executed.last().map(|e| e.time).unwrap_or(0.0);
    for ob in &cfg.obstacles {
        let _ = writeln!(
            s,
            "{}",
            svg_oriented_rect(
                ob.x,
                ob.y,
                ob.heading,
                0.5 * ob.l,
                0.5 * ob.w,
                r##"fill="#8a8a8a" stroke="#444444" stroke-width="0.08""##
            )
        );
        if (ob.vx != 0.0 || ob.vy != 0.0) && final_time > 0.0 {
            let moved = ob.at_time(final_time);
            let _ = writeln!(
                s,
                "{}",
                svg_oriented_rect(
                    moved.x,
                    moved.y,
                    moved.heading,
                    0.5 * moved.l,
                    0.5 * moved.w,
                    concat!(
                        r##"fill="none" stroke="#444444" stroke-width="0.08" "##,
                        r#"stroke-dasharray="0.4 0.4""#
                    )
                )
            );
        }
    }
    if let Some(last_cycle) = trace.cycles.last() {
        for ob in &last_cycle.obstacles {
            let _ = writeln!(
                s,
                "{}",
                svg_oriented_rect(
                    ob.x,
                    ob.y,
                    ob.heading,
                    ob.half_length,
                    ob.half_width,
                    r##"fill="none" stroke="#e07b00" stroke-width="0.1""##
                )
            );
            let _ = writeln!(
                s,
                concat!(
                    r#"<ellipse cx="0" cy="0" rx="{:.3}" ry="{:.3}" "#,
                    r#"transform="translate({:.3} {:.3}) rotate({:.3})" "#,
                    r##"fill="#3060c0" fill-opacity="0.12" stroke="#3060c0" stroke-width="0.06"/>"##
                ),
                ob.semi_axis_a,
                ob.semi_axis_b,
                ob.x,
                ob.y,
                ob.heading.to_degrees()
            );
        }
    }
    let mut pts = format!("{:.3},{:.3}", cfg.ego.x, cfg.ego.y);
    for e in &trace.executed {
        let _ = write!(pts, " {:.3},{:.3}", e.x, e.y);
    }
    let _ = writeln!(
        s,
        r##"<polyline points="{pts}" fill="none" stroke="#c02020" stroke-width="0.18"/>"##
    );
    let _ = writeln!(
        s,
        r##"<circle cx="{:.3}" cy="{:.3}" r="0.4" fill="#c02020"/>"##,
        cfg.ego.x, cfg.ego.y
    );
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    s
}

/// Writes `metrics.csv`, `trace.jsonl`, and one SVG per trial into
/// `out` (created if missing).
pub fn emit_report(cfg: &ScenarioConfig, results: &[ModeResult], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("metrics.csv"), emit_metrics_csv(results))?;
    std::fs::write(out.join("trace.jsonl"), emit_trace_jsonl(results)?)?;
    for r in results {
        for (trial, trace) in r.traces.iter().enumerate() {
            let name = format!("trial_{}_{trial:03}.svg", r.mode);
            std::fs::write(out.join(name), render_trial_svg(cfg, trace))?;
        }
    }
    Ok(())
}

/// Sensor characterization sweep: a single vehicle-sized object is
/// observed repeatedly at each (distance, azimuth) grid cell and the
/// fused uncertainty is averaged over the frames.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub profile: SensorNoiseProfile,
    pub distances: Vec<f64>,
    pub azimuths: Vec<f64>,
    pub frames: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            profile: SensorNoiseProfile::default(),
            distances: vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
            azimuths: vec![-0.8, -0.4, 0.0, 0.4, 0.8],
            frames: 500,
            seed: 17,
        }
    }
}

/// Frame-averaged fused uncertainty at one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub distance: f64,
    pub azimuth: f64,
    pub sigma_lat: f64,
    pub sigma_lon: f64,
    pub predictive_entropy: f64,
    pub mutual_information: f64,
    /// Frames in which the object was actually detected.
    pub frames_detected: usize,
}

/// The noise law depends on azimuth only through |sin φ|, so mirrored
/// cells must agree exactly; deriving the cell seed from |φ| makes the
/// random draws identical too, keeping the symmetry bit-exact.
fn cell_seed(base: u64, distance: f64, azimuth: f64) -> u64 {
    let mut h = base ^ distance.to_bits();
    h = h.rotate_left(25) ^ azimuth.abs().to_bits();
    h.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Measures the fused detection uncertainty over the sweep grid.
pub fn sense_sweep(cfg: &SweepConfig) -> Result<Vec<SweepCell>> {
    cfg.profile.validate()?;
    if cfg.frames == 0 {
        return Err(Error::Scenario("sweep needs at least one frame".into()));
    }
    let ego = EgoState {
        x: 0.0,
        y: 0.0,
        heading: 0.0,
        speed: 0.0,
    };
    let mut cells = Vec::with_capacity(cfg.distances.len() * cfg.azimuths.len());
    for &d in &cfg.distances {
        for &phi in &cfg.azimuths {
            let truth = [GroundTruthObstacle {
                id: 1,
                x: d * phi.cos(),
                y: d * phi.sin(),
                heading: 0.0,
                h: 1.5,
                w: 2.0,
                l: 4.5,
                vx: 0.0,
                vy: 0.0,
            }];
            let base = cell_seed(cfg.seed, d, phi);
            let mut acc = (0.0, 0.0, 0.0, 0.0);
            let mut detected = 0usize;
            for frame in 0..cfg.frames {
                let dets = sense(&ego, &truth, &cfg.profile, base.wrapping_add(frame as u64));
                let Some(det) = dets.first() else { continue };
                let belief = fuse(&det.samples)?;
                let (lat, lon) = lateral_longitudinal_sigma(&belief.var_total)?;
                acc.0 += lat;
                acc.1 += lon;
                acc.2 += belief.predictive_entropy;
                acc.3 += belief.mutual_information;
                detected += 1;
            }
            let m = detected.max(1) as f64;
            cells.push(SweepCell {
                distance: d,
                azimuth: phi,
                sigma_lat: acc.0 / m,
                sigma_lon: acc.1 / m,
                predictive_entropy: acc.2 / m,
                mutual_information: acc.3 / m,
                frames_detected: detected,
            });
        }
    }
    Ok(cells)
}

/// Renders the sweep grid as CSV.
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from(
        "distance_m,azimuth_rad,sigma_lat,sigma_lon,predictive_entropy,mutual_information,frames_detected\n",
    );
    for c in cells {
        let _ = writeln!(
            out,
            "{:.3},{:.4},{:.6},{:.6},{:.6},{:.6},{}",
            c.distance,
            c.azimuth,
            c.sigma_lat,
            c.sigma_lon,
            c.predictive_entropy,
            c.mutual_information,
            c.frames_detected
        );
    }
    out
}

/// Writes `sweep.csv` into `out` (created if missing).
pub fn emit_sweep(cells: &[SweepCell], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("sweep.csv"), sweep_csv(cells))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{ExecutedStep, ObstacleSnapshot};

    fn mini_scenario(trials: usize) -> ScenarioConfig {
        let json = format!(
            r#"{{
                "name": "mini",
                "lanes": {{ "lane_count": 2, "lane_width": 3.6, "length": 60.0 }},
                "ego": {{ "x": 4.0, "y": 3.6, "heading": 0.0, "speed": 5.0 }},
                "goal": {{ "x": 30.0, "y": 3.6, "radius": 2.0 }},
                "obstacles": [],
                "sensor": {{ "clutter_rate": 0.0 }},
                "planner": {{ "max_iterations": 40, "candidates": 5, "max_cycles": 15 }},
                "trials": {trials},
                "base_seed": 100
            }}"#
        );
        ScenarioConfig::from_json(&json).unwrap()
    }

    fn goal_trace(mode: Mode, risk: f64) -> RunTrace {
        RunTrace {
            mode,
            trial_seed: 0,
            status: RunStatus::GoalReached,
            deadlock_cycles: 0,
            executed: vec![
                ExecutedStep {
                    time: 0.1,
                    x: 1.0,
                    y: 0.0,
                    heading: 0.0,
                    speed: 5.0,
                    risk,
                    violation: false,
                },
                ExecutedStep {
                    time: 0.2,
                    x: 2.0,
                    y: 0.0,
                    heading: 0.0,
                    speed: 5.0,
                    risk: 0.0,
                    violation: false,
                },
            ],
            cycles: vec![],
        }
    }

    #[test]
    fn metrics_header_is_frozen() {
        assert_eq!(
            METRICS_HEADER,
            "mode,rate_succ_1,rate_succ_2,rate_succ_3,risk_max,risk_avg,n_waypoints,traj_length_m"
        );
        assert!(emit_metrics_csv(&[]).starts_with(METRICS_HEADER));
    }

    #[test]
    fn zero_trials_yield_header_only_csv() {
        let result = ModeResult {
            mode: Mode::Pu,
            traces: vec![],
            metrics: compute_metrics(Mode::Pu, &[]),
        };
        let csv = emit_metrics_csv(&[result]);
        assert_eq!(csv, format!("{METRICS_HEADER}\n"));
    }

    #[test]
    fn metrics_from_hand_built_traces() {
        let good = goal_trace(Mode::Pu, 0.004);
        let mut timeout = goal_trace(Mode::Pu, 0.002);
        timeout.status = RunStatus::Timeout;
        timeout.deadlock_cycles = 2;
        let m = compute_metrics(Mode::Pu, &[good, timeout]);
        assert_eq!(m.rate_succ_1, 0.5);
        assert_eq!(m.rate_succ_2, 0.5);
        assert_eq!(m.rate_succ_3, 0.5);
        assert_eq!(m.risk_max, 0.004);
        assert!((m.risk_avg - (0.004 + 0.002) / 4.0).abs() < 1e-15);
        // Waypoint and length means cover goal-reaching trials only.
        assert_eq!(m.n_waypoints, 2.0);
        assert!((m.traj_length_m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn violation_breaks_third_rate_only() {
        let mut t = goal_trace(Mode::Pu, 0.5);
        t.executed[0].violation = true;
        let m = compute_metrics(Mode::Pu, &[t]);
        assert_eq!(m.rate_succ_1, 1.0);
        assert_eq!(m.rate_succ_2, 1.0);
        assert_eq!(m.rate_succ_3, 0.0);
    }

    #[test]
    fn one_row_per_nonempty_mode() {
        let result = ModeResult {
            mode: Mode::Cc,
            traces: vec![goal_trace(Mode::Cc, 0.01)],
            metrics: compute_metrics(Mode::Cc, &[goal_trace(Mode::Cc, 0.01)]),
        };
        let csv = emit_metrics_csv(&[result]);
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("cc,"));
        assert_eq!(lines[1].split(',').count(), 8);
    }

    #[test]
    fn batch_is_deterministic_and_seeded() {
        let cfg = mini_scenario(2);
        let scene = cfg.clone().into_runtime(Mode::Pu).unwrap();
        let a = run_batch(&scene).unwrap();
        let b = run_batch(&scene).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].trial_seed, 100);
        assert_eq!(a[1].trial_seed, 101);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn reported_risk_max_matches_traces() {
        // Cross-check: the metric must equal the largest risk present in
        // the step-level and cycle-level trace records.
        let json = r#"{
            "name": "crosscheck",
            "lanes": { "lane_count": 2, "lane_width": 3.6, "length": 60.0 },
            "ego": { "x": 4.0, "y": 1.8, "heading": 0.0, "speed": 5.0 },
            "goal": { "x": 40.0, "y": 1.8, "radius": 2.0 },
            "obstacles": [
                { "id": 1, "x": 22.0, "y": 1.8, "h": 1.5, "w": 2.0, "l": 4.5 }
            ],
            "sensor": { "clutter_rate": 0.0 },
            "planner": { "max_iterations": 40, "candidates": 5, "max_cycles": 12 },
            "trials": 2,
            "base_seed": 7
        }"#;
        let cfg = ScenarioConfig::from_json(json).unwrap();
        let scene = cfg.into_runtime(Mode::Pu).unwrap();
        let result = summarize(&scene).unwrap();
        let step_max = result
            .traces
            .iter()
            .flat_map(|t| t.executed.iter().map(|s| s.risk))
            .fold(0.0f64, f64::max);
        let cycle_max = result
            .traces
            .iter()
            .flat_map(|t| t.cycles.iter().map(|c| c.risk_max))
            .fold(0.0f64, f64::max);
        assert!(step_max > 0.0, "scenario should produce nonzero risk");
        assert_eq!(result.metrics.risk_max, step_max);
        assert_eq!(result.metrics.risk_max, cycle_max);
    }

    #[test]
    fn report_writes_all_artifacts() {
        let cfg = mini_scenario(1);
        let scene = cfg.clone().into_runtime(Mode::Pu).unwrap();
        let result = summarize(&scene).unwrap();
        let total_cycles: usize = result.traces.iter().map(|t| t.cycles.len()).sum();
        let last_cycle_saw_obstacles = result.traces[0]
            .cycles
            .last()
            .is_some_and(|c| !c.obstacles.is_empty());
        let dir = tempfile::tempdir().unwrap();
        emit_report(&cfg, &[result], dir.path()).unwrap();

        let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(csv.starts_with(METRICS_HEADER));
        assert_eq!(csv.trim_end().lines().count(), 2);

        let jsonl = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
        assert_eq!(jsonl.trim_end().lines().count(), total_cycles);
        for line in jsonl.trim_end().lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["mode"], "pu");
        }

        let svg = std::fs::read_to_string(dir.path().join("trial_pu_000.svg")).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("<ellipse") || !last_cycle_saw_obstacles);
    }

    #[test]
    fn zero_uncertainty_ellipse_matches_footprint() {
        let cfg = mini_scenario(1);
        let mut trace = goal_trace(Mode::Pu, 0.0);
        trace.cycles.push(CycleRecord {
            cycle: 0,
            sim_time: 0.1,
            tree_nodes: 1,
            recorded_paths: 0,
            selected_nodes: 1,
            executed_steps: 1,
            tree_risk_max: 0.0,
            risk_max: 0.0,
            deadlock: false,
            obstacles: vec![ObstacleSnapshot {
                x: 20.0,
                y: 3.6,
                heading: 0.0,
                half_length: 2.25,
                half_width: 1.0,
                semi_axis_a: 2.25,
                semi_axis_b: 1.0,
            }],
        });
        let svg = render_trial_svg(&cfg, &trace);
        assert!(svg.contains(r#"rx="2.250" ry="1.000""#));
    }

    #[test]
    fn sweep_is_mirror_symmetric_and_grows_with_distance() {
        let cfg = SweepConfig {
            distances: vec![10.0, 40.0],
            azimuths: vec![-0.6, 0.0, 0.6],
            frames: 60,
            seed: 5,
            ..SweepConfig::default()
        };
        let cells = sense_sweep(&cfg).unwrap();
        assert_eq!(cells.len(), 6);
        let at = |d: f64, phi: f64| {
            *cells
                .iter()
                .find(|c| c.distance == d && c.azimuth == phi)
                .unwrap()
        };
        // Mirrored cells share their random draws; only world-frame
        // translation rounding separates them.
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300);
        for d in [10.0, 40.0] {
            let plus = at(d, 0.6);
            let minus = at(d, -0.6);
            assert!(close(plus.sigma_lat, minus.sigma_lat));
            assert!(close(plus.sigma_lon, minus.sigma_lon));
            assert!(close(plus.predictive_entropy, minus.predictive_entropy));
            assert!(close(plus.mutual_information, minus.mutual_information));
        }
        assert!(at(40.0, 0.0).sigma_lat > at(10.0, 0.0).sigma_lat);
        assert!(at(40.0, 0.0).sigma_lon > at(10.0, 0.0).sigma_lon);
    }

    #[test]
    fn sweep_csv_schema() {
        let cells = vec![SweepCell {
            distance: 10.0,
            azimuth: 0.4,
            sigma_lat: 0.2,
            sigma_lon: 0.3,
            predictive_entropy: 0.05,
            mutual_information: 0.01,
            frames_detected: 50,
        }];
        let csv = sweep_csv(&cells);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "distance_m,azimuth_rad,sigma_lat,sigma_lon,predictive_entropy,mutual_information,frames_detected"
        );
        assert_eq!(lines.next().unwrap().split(',').count(), 7);
    }
}
