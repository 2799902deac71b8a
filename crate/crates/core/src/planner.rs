//! Risk-bounded tree planner with baseline modes.
//!
//! The planner grows a tree of closed-loop trajectory segments. Each
//! candidate extension is simulated with the pure-pursuit controller,
//! the positional covariance is propagated along it, and every simulated
//! state is scored with the analytic collision bound; a segment is kept
//! only up to the last state that satisfies the chance constraint. Nodes
//! carry a lower bound (straight-line distance to goal) and an upper
//! bound (cheapest known risk-weighted cost through a recorded
//! goal-connected path) on cost-to-go, and path selection minimizes the
//! worst upper bound along a path.
//!
//! Three modes share this machinery and differ only in what uncertainty
//! they admit: the full planner consumes fused perception covariances
//! and propagates ego noise; the fixed-uncertainty baseline replaces
//! every obstacle covariance with a constant isotropic one; the
//! deterministic baseline zeroes all covariances, collapsing the risk
//! bound into a plain inflated-footprint intersection test.

use std::time::{Duration, Instant};

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    ego_polygon, propagate_covariance, step, steer_to, ControlInput, EgoState, MotionConfig,
    StateBelief,
};
use crate::error::{Error, Result};
use crate::perception::{sense, DetectionSource};
use crate::risk::{check_chance_constraint, collision_prob_obstacle, RiskConfig};
use crate::scenario::Scenario;
use crate::spatial::{filter_misdetections, make_obstacle_belief, FilterThresholds, ObstacleBelief};
use crate::uncertainty::{fuse, THETA_IDX};

/// Planning mode: full perception-uncertainty planner or a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Perception-uncertainty planner: fused covariances plus ego noise.
    Pu,
    /// Chance-constrained baseline with a fixed obstacle uncertainty scale.
    Cc,
    /// Closed-loop baseline that ignores uncertainty entirely.
    Cl,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode> {
        match s.to_ascii_lowercase().as_str() {
            "pu" => Ok(Mode::Pu),
            "cc" => Ok(Mode::Cc),
            "cl" => Ok(Mode::Cl),
            _ => Err(Error::UnknownMode(s.to_string())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Pu => "pu",
            Mode::Cc => "cc",
            Mode::Cl => "cl",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Axis-aligned sampling bounds for tree growth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRegion {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl SampleRegion {
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.y_min..=self.y_max).contains(&p.y)
    }

    fn sample(&self, rng: &mut ChaCha20Rng) -> Vector2<f64> {
        Vector2::new(
            rng.gen_range(self.x_min..=self.x_max),
            rng.gen_range(self.y_min..=self.y_max),
        )
    }
}

/// All planner knobs. Defaults follow the reference setup: 15 candidate
/// nodes, 200 samples per expansion phase, risk weight 100 against
/// distance weight 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub mode: Mode,
    pub k_cc: f64,
    pub k_dist: f64,
    /// Number of best-ranked nodes tried per sample.
    pub candidates: usize,
    /// Samples per expansion phase (the deterministic budget).
    pub max_iterations: usize,
    /// Wall-clock budget per expansion phase, seconds; only enforced when
    /// a deadline is passed to expand_tree explicitly.
    pub expansion_interval: f64,
    pub goal_radius: f64,
    pub sample_region: SampleRegion,
    /// Obstacle position std assumed by the fixed-uncertainty baseline.
    pub cc_fixed_sigma: f64,
    pub seed: u64,
    /// Fraction of samples drawn at the goal instead of uniformly.
    pub goal_bias: f64,
    /// Simulated seconds of the selected path executed per cycle.
    pub replan_horizon: f64,
    /// Simulated seconds between stored tree nodes along a segment.
    pub node_interval: f64,
    /// Planning cycles before a run times out.
    pub max_cycles: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Pu,
            k_cc: 100.0,
            k_dist: 1.0,
            candidates: 15,
            max_iterations: 200,
            expansion_interval: 3.0,
            goal_radius: 2.0,
            sample_region: SampleRegion {
                x_min: 0.0,
                x_max: 120.0,
                y_min: 0.0,
                y_max: 10.8,
            },
            cc_fixed_sigma: 0.8,
            seed: 0,
            goal_bias: 0.05,
            replan_horizon: 1.0,
            node_interval: 0.5,
            max_cycles: 40,
        }
    }
}

pub type NodeId = usize;

/// One tree node: a belief state reached by a stored trajectory segment.
#[derive(Debug, Clone)]
pub struct TreeNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub belief: StateBelief,
    /// Analytic risk bound at this state.
    pub delta_t: f64,
    /// Simulated states from the parent node to this one, dt resolution.
    pub trajectory_from_parent: Vec<EgoState>,
    /// Controls that produced the trajectory (replayed at execution).
    pub controls_from_parent: Vec<ControlInput>,
    /// Simulated steps since the tree root (fixes the prediction time of
    /// moving obstacles at this node).
    pub steps_from_root: usize,
    /// Risk-weighted cost of the edge from the parent.
    pub edge_cost: f64,
    /// Straight-line distance to goal (cost-to-go lower bound).
    pub c_lb: f64,
    /// Cheapest known cost-to-go through a recorded path; +inf without one.
    pub c_ub: f64,
}

impl TreeNode {
    pub fn position(&self) -> Vector2<f64> {
        self.belief.mean.position()
    }
}

/// Candidate-ranking cost: risk plus distance to the current sample.
pub fn node_cost(node: &TreeNode, sample: &Vector2<f64>, cfg: &PlannerConfig) -> f64 {
    cfg.k_cc * node.delta_t + cfg.k_dist * (node.position() - sample).norm()
}

/// Edge cost: risk at the child plus the stored trajectory arc length.
pub fn edge_cost(parent: &TreeNode, child: &TreeNode, cfg: &PlannerConfig) -> f64 {
    let mut prev = parent.position();
    let mut arc = 0.0;
    for s in &child.trajectory_from_parent {
        arc += (s.position() - prev).norm();
        prev = s.position();
    }
    cfg.k_cc * child.delta_t + cfg.k_dist * arc
}

/// The search tree for one planning cycle.
#[derive(Debug, Clone)]
pub struct PlanTree {
    pub nodes: Vec<TreeNode>,
    pub root: NodeId,
    pub goal: Vector2<f64>,
    pub goal_radius: f64,
    /// Root-to-goal node id sequences, in discovery order.
    pub paths: Vec<Vec<NodeId>>,
}

impl PlanTree {
    pub fn new(
        root_belief: StateBelief,
        goal: Vector2<f64>,
        goal_radius: f64,
        root_delta: f64,
    ) -> Self {
        let c_lb = (root_belief.mean.position() - goal).norm();
        let root = TreeNode {
            id: 0,
            parent: None,
            belief: root_belief,
            delta_t: root_delta,
            trajectory_from_parent: Vec::new(),
            controls_from_parent: Vec::new(),
            steps_from_root: 0,
            edge_cost: 0.0,
            c_lb,
            c_ub: if c_lb <= goal_radius { c_lb } else { f64::INFINITY },
        };
        PlanTree {
            nodes: vec![root],
            root: 0,
            goal,
            goal_radius,
            paths: Vec::new(),
        }
    }

    pub fn in_goal(&self, id: NodeId) -> bool {
        self.nodes[id].c_lb <= self.goal_radius
    }

    /// Appends a node; nodes landing inside the goal region immediately
    /// record their root path and propagate cost bounds upward.
    #[allow(clippy::too_many_arguments)]
    fn insert(
        &mut self,
        parent: NodeId,
        belief: StateBelief,
        delta_t: f64,
        trajectory: Vec<EgoState>,
        controls: Vec<ControlInput>,
        steps_from_root: usize,
        cfg: &PlannerConfig,
    ) -> NodeId {
        let id = self.nodes.len();
        let c_lb = (belief.mean.position() - self.goal).norm();
        let mut node = TreeNode {
            id,
            parent: Some(parent),
            belief,
            delta_t,
            trajectory_from_parent: trajectory,
            controls_from_parent: controls,
            steps_from_root,
            edge_cost: 0.0,
            c_lb,
            c_ub: if c_lb <= self.goal_radius {
                c_lb
            } else {
                f64::INFINITY
            },
        };
        node.edge_cost = edge_cost(&self.nodes[parent], &node, cfg);
        let reached_goal = c_lb <= self.goal_radius;
        self.nodes.push(node);
        if reached_goal {
            self.record_path(id);
        }
        id
    }

    /// Stores the root path of a goal-region node and updates bounds.
    fn record_path(&mut self, goal_node: NodeId) {
        let mut path = Vec::new();
        let mut cur = goal_node;
        loop {
            path.push(cur);
            match self.nodes[cur].parent {
                Some(p) => cur = p,
                None => break,
            }
        }
        path.reverse();
        self.paths.push(path);
        self.update_cub(goal_node);
    }

    /// Back-propagates cost-to-go upper bounds from `from` toward the
    /// root. A parent improves to `edge_cost + child c_ub`; propagation
    /// stops at the first ancestor that does not improve (its current
    /// bound already has a witness child) and never overwrites the
    /// pinned `c_ub = c_lb` of goal-region nodes.
    pub fn update_cub(&mut self, from: NodeId) {
        let mut child = from;
        while let Some(p) = self.nodes[child].parent {
            if self.in_goal(p) {
                break;
            }
            let cand = self.nodes[child].edge_cost + self.nodes[child].c_ub;
            if cand < self.nodes[p].c_ub {
                self.nodes[p].c_ub = cand;
                child = p;
            } else {
                break;
            }
        }
    }

    /// Worst cost-to-go upper bound along a path (the selection score).
    pub fn path_score(&self, path: &[NodeId]) -> f64 {
        path.iter()
            .map(|&id| self.nodes[id].c_ub)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Picks the recorded path minimizing the worst upper bound along it
    /// (ties: fewer nodes, then discovery order). Without any recorded
    /// path, falls back to the root path of the node closest to the goal.
    pub fn select_path(&self) -> Vec<NodeId> {
        let mut best: Option<(f64, usize, usize)> = None;
        for (idx, path) in self.paths.iter().enumerate() {
            let key = (self.path_score(path), path.len(), idx);
            let better = match &best {
                None => true,
                Some((s, l, i)) => {
                    key.0.total_cmp(s).then(key.1.cmp(l)).then(key.2.cmp(i))
                        == std::cmp::Ordering::Less
                }
            };
            if better {
                best = Some(key);
            }
        }
        if let Some((_, _, idx)) = best {
            return self.paths[idx].clone();
        }
        // Fallback: steer toward the node nearest the goal.
        let mut nearest = self.root;
        for n in &self.nodes {
            if n.c_lb < self.nodes[nearest].c_lb {
                nearest = n.id;
            }
        }
        let mut path = Vec::new();
        let mut cur = nearest;
        loop {
            path.push(cur);
            match self.nodes[cur].parent {
                Some(p) => cur = p,
                None => break,
            }
        }
        path.reverse();
        path
    }

    /// Largest stored risk bound over planner-admitted nodes. The root is
    /// excluded: it records the measured current state, which the planner
    /// must accept as-is, while every other node passed the admission
    /// check. An empty (root-only) tree reports 0.
    pub fn max_node_risk(&self) -> f64 {
        self.nodes
            .iter()
            .filter(|n| n.parent.is_some())
            .map(|n| n.delta_t)
            .fold(0.0, f64::max)
    }
}

/// Total risk with every obstacle advanced along its velocity by
/// `t_offset` seconds.
fn total_risk_at(
    polygon: &crate::dynamics::HalfPlaneSet,
    ego_cov: &Matrix2<f64>,
    obstacles: &[ObstacleBelief],
    t_offset: f64,
    risk_cfg: &RiskConfig,
) -> Result<f64> {
    let mut sum = 0.0;
    for ob in obstacles {
        let mut moved = ob.clone();
        moved.center = ob.predicted_center(t_offset);
        sum += collision_prob_obstacle(polygon, &moved, ego_cov, risk_cfg)?;
        if sum >= 1.0 {
            return Ok(1.0);
        }
    }
    Ok(sum)
}

/// Simulates a controller run from `from` toward `target`, keeps the
/// prefix satisfying the sampling bounds and the chance constraint, and
/// inserts nodes every `node_interval` of simulated time plus the
/// endpoint. Returns the last inserted node, if any.
#[allow(clippy::too_many_arguments)]
fn grow_branch(
    tree: &mut PlanTree,
    from: NodeId,
    target: Vector2<f64>,
    obstacles: &[ObstacleBelief],
    cfg: &PlannerConfig,
    motion: &MotionConfig,
    risk_cfg: &RiskConfig,
) -> Result<Option<NodeId>> {
    let start = tree.nodes[from].belief;
    let base_steps = tree.nodes[from].steps_from_root;
    let outcome = steer_to(&start, target, motion);
    if outcome.trajectory.is_empty() {
        return Ok(None);
    }

    let stride = ((cfg.node_interval / motion.dt).round() as usize).max(1);
    let mut cov = start.covariance;
    let mut feasible: Vec<(EgoState, ControlInput, Matrix2<f64>, f64)> = Vec::new();
    for (k, (state, ctrl)) in outcome.trajectory.iter().enumerate() {
        if cfg.mode != Mode::Cl {
            cov = propagate_covariance(&cov, &Matrix2::identity(), &motion.process_noise);
        }
        if !cfg.sample_region.contains(&state.position()) {
            break;
        }
        let polygon = ego_polygon(state, motion);
        let t_offset = (base_steps + k + 1) as f64 * motion.dt;
        let delta = total_risk_at(&polygon, &cov, obstacles, t_offset, risk_cfg)?;
        if !check_chance_constraint(delta, risk_cfg) {
            break;
        }
        feasible.push((*state, *ctrl, cov, delta));
    }
    if feasible.is_empty() {
        return Ok(None);
    }

    let mut parent = from;
    let mut last = None;
    let mut states = Vec::new();
    let mut controls = Vec::new();
    let total = feasible.len();
    for (k, (state, ctrl, cov, delta)) in feasible.into_iter().enumerate() {
        states.push(state);
        controls.push(ctrl);
        if (k + 1) % stride == 0 || k + 1 == total {
            let id = tree.insert(
                parent,
                StateBelief { mean: state, covariance: cov },
                delta,
                std::mem::take(&mut states),
                std::mem::take(&mut controls),
                base_steps + k + 1,
                cfg,
            );
            parent = id;
            last = Some(id);
        }
    }
    Ok(last)
}

/// One expansion phase: up to `max_iterations` samples (and optionally a
/// wall-clock budget — omitted in reproducible batch runs, where the
/// iteration cap is the budget). Per sample, the best-ranked `candidates`
/// nodes each grow a branch toward it, and every fresh branch endpoint
/// attempts a goal connection.
pub fn expand_tree(
    tree: &mut PlanTree,
    obstacles: &[ObstacleBelief],
    cfg: &PlannerConfig,
    motion: &MotionConfig,
    risk_cfg: &RiskConfig,
    rng: &mut ChaCha20Rng,
    time_budget: Option<Duration>,
) -> Result<()> {
    let deadline = time_budget.map(|b| Instant::now() + b);
    for _ in 0..cfg.max_iterations {
        if let Some(d) = deadline {
            if Instant::now() >= d {
                break;
            }
        }
        let sample = if rng.gen::<f64>() < cfg.goal_bias {
            tree.goal
        } else {
            cfg.sample_region.sample(rng)
        };

        let mut ranked: Vec<(f64, NodeId)> = tree
            .nodes
            .iter()
            .map(|n| (node_cost(n, &sample, cfg), n.id))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let chosen: Vec<NodeId> = ranked
            .iter()
            .take(cfg.candidates)
            .map(|&(_, id)| id)
            .collect();

        let mut endpoints = Vec::new();
        for id in chosen {
            if let Some(end) = grow_branch(tree, id, sample, obstacles, cfg, motion, risk_cfg)? {
                endpoints.push(end);
            }
        }
        let goal = tree.goal;
        for end in endpoints {
            if !tree.in_goal(end) {
                grow_branch(tree, end, goal, obstacles, cfg, motion, risk_cfg)?;
            }
        }
    }
    Ok(())
}

/// Rewrites obstacle beliefs for the baseline modes: the fixed-scale
/// baseline substitutes a constant isotropic covariance and drops the
/// perception-derived inflations; the deterministic baseline drops the
/// covariance as well. The full mode passes obstacles through unchanged.
pub fn baseline_mode_transform(
    obstacles: &[ObstacleBelief],
    cfg: &PlannerConfig,
) -> Vec<ObstacleBelief> {
    match cfg.mode {
        Mode::Pu => obstacles.to_vec(),
        Mode::Cc => obstacles
            .iter()
            .map(|ob| ObstacleBelief {
                covariance: Matrix2::from_diagonal_element(cfg.cc_fixed_sigma.powi(2)),
                semi_axis_a: ob.half_length,
                semi_axis_b: ob.half_width,
                ..ob.clone()
            })
            .collect(),
        Mode::Cl => obstacles
            .iter()
            .map(|ob| ObstacleBelief {
                covariance: Matrix2::zeros(),
                semi_axis_a: ob.half_length,
                semi_axis_b: ob.half_width,
                ..ob.clone()
            })
            .collect(),
    }
}

/// Oriented-box overlap via the separating-axis test; touching boxes
/// count as intersecting (conservative).
#[allow(clippy::too_many_arguments)] // two boxes, four scalars each
pub fn boxes_intersect(
    c1: Vector2<f64>,
    heading1: f64,
    hl1: f64,
    hw1: f64,
    c2: Vector2<f64>,
    heading2: f64,
    hl2: f64,
    hw2: f64,
) -> bool {
    let axes = [
        Vector2::new(heading1.cos(), heading1.sin()),
        Vector2::new(-heading1.sin(), heading1.cos()),
        Vector2::new(heading2.cos(), heading2.sin()),
        Vector2::new(-heading2.sin(), heading2.cos()),
    ];
    let d = c2 - c1;
    for axis in &axes {
        let r1 = hl1 * axes[0].dot(axis).abs() + hw1 * axes[1].dot(axis).abs();
        let r2 = hl2 * axes[2].dot(axis).abs() + hw2 * axes[3].dot(axis).abs();
        if d.dot(axis).abs() > r1 + r2 {
            return false;
        }
    }
    true
}

/// Emergency-stop feedback law: brake at full deceleration while
/// steering the heading back toward the road axis, so a stop begun
/// mid-lane-change settles road-aligned instead of running off the
/// drivable region.
fn brake_control(state: &EgoState, motion: &MotionConfig) -> ControlInput {
    ControlInput {
        steering: (-state.heading).clamp(-motion.steer_max, motion.steer_max),
        accel: motion.a_min,
    }
}

/// Simulates the emergency-stop law from `start` and checks the chance
/// constraint (`budget`) and region containment at every step until
/// standstill. The executed portion of a plan is always
/// trimmed so its endpoint passes this check, which keeps a safe stop
/// feasible no matter what later cycles discover.
#[allow(clippy::too_many_arguments)]
fn stop_feasible(
    start: &EgoState,
    start_cov: &Matrix2<f64>,
    steps_from_cycle: usize,
    obstacles: &[ObstacleBelief],
    cfg: &PlannerConfig,
    motion: &MotionConfig,
    risk_cfg: &RiskConfig,
    budget: f64,
) -> Result<bool> {
    let mut s = *start;
    let mut cov = *start_cov;
    let mut k = steps_from_cycle;
    let mut guard = 0usize;
    while s.speed > 0.0 && guard < 2000 {
        s = step(s, brake_control(&s, motion), motion);
        if cfg.mode != Mode::Cl {
            cov = propagate_covariance(&cov, &Matrix2::identity(), &motion.process_noise);
        }
        k += 1;
        guard += 1;
        if !cfg.sample_region.contains(&s.position()) {
            return Ok(false);
        }
        let polygon = ego_polygon(&s, motion);
        let delta = total_risk_at(&polygon, &cov, obstacles, k as f64 * motion.dt, risk_cfg)?;
        if delta >= budget {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Longest prefix of `controls` (starting at `start`) whose endpoint
/// still admits a feasible emergency stop.
fn stop_guarded_prefix(
    start: &EgoState,
    start_cov: &Matrix2<f64>,
    controls: &[ControlInput],
    obstacles: &[ObstacleBelief],
    cfg: &PlannerConfig,
    motion: &MotionConfig,
    risk_cfg: &RiskConfig,
) -> Result<usize> {
    // The contingency stop must satisfy the same per-step bound as the
    // plan itself; a tighter guard makes following moving traffic at a
    // compliant distance impossible and stalls the vehicle.
    let budget = risk_cfg.risk_budget();
    let mut best = 0usize;
    let mut s = *start;
    let mut cov = *start_cov;
    for (j, ctrl) in controls.iter().enumerate() {
        s = step(s, *ctrl, motion);
        if cfg.mode != Mode::Cl {
            cov = propagate_covariance(&cov, &Matrix2::identity(), &motion.process_noise);
        }
        if stop_feasible(&s, &cov, j + 1, obstacles, cfg, motion, risk_cfg, budget)? {
            best = j + 1;
        }
    }
    Ok(best)
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    GoalReached,
    Collision,
    Timeout,
}

/// One executed simulation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutedStep {
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    /// Analytic risk bound at this state against the fused (untransformed)
    /// obstacle beliefs — the common yardstick across modes.
    pub risk: f64,
    /// True when the risk bound breaches the configured budget.
    pub violation: bool,
}

/// Snapshot of one perceived obstacle, for plotting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSnapshot {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
    pub semi_axis_a: f64,
    pub semi_axis_b: f64,
}

/// Per-planning-cycle bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub sim_time: f64,
    pub tree_nodes: usize,
    pub recorded_paths: usize,
    pub selected_nodes: usize,
    pub executed_steps: usize,
    /// Largest stored node risk after expansion, over planner-admitted
    /// nodes (the measured root state is excluded).
    pub tree_risk_max: f64,
    /// Largest executed-step risk within this cycle.
    pub risk_max: f64,
    /// True when no executable segment existed and the vehicle braked.
    pub deadlock: bool,
    pub obstacles: Vec<ObstacleSnapshot>,
}

/// Full record of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub mode: Mode,
    pub trial_seed: u64,
    pub status: RunStatus,
    pub deadlock_cycles: usize,
    pub executed: Vec<ExecutedStep>,
    pub cycles: Vec<CycleRecord>,
}

impl RunTrace {
    pub fn trajectory_length(&self) -> f64 {
        self.executed
            .windows(2)
            .map(|w| ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt())
            .sum()
    }

    pub fn risk_max(&self) -> f64 {
        self.executed.iter().map(|s| s.risk).fold(0.0, f64::max)
    }

    pub fn any_violation(&self) -> bool {
        self.executed.iter().any(|s| s.violation)
    }
}

/// Derives the perception seed of one planning cycle from the trial seed.
/// Mode-independent, so all modes see the same detector randomness.
fn cycle_seed(trial_seed: u64, cycle: usize) -> u64 {
    trial_seed.wrapping_add((cycle as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Builds planning obstacles from one detector frame: fuse each sample
/// set, drop high-entropy detections, convert survivors to planar
/// beliefs. Real objects inherit their ground-truth velocity (standing in
/// for a tracker); clutter that slips through is treated as static.
fn perceive(
    scene: &Scenario,
    ego: &EgoState,
    sim_time: f64,
    frame_seed: u64,
) -> Result<Vec<ObstacleBelief>> {
    let truth_now: Vec<_> = scene.truth.iter().map(|o| o.at_time(sim_time)).collect();
    let detections = sense(ego, &truth_now, &scene.sensor, frame_seed);
    let thresholds = FilterThresholds::default();
    let mut out = Vec::new();
    for det in &detections {
        let belief = fuse(&det.samples)?;
        if filter_misdetections(vec![belief.clone()], thresholds).is_empty() {
            continue;
        }
        let velocity = match det.source {
            DetectionSource::Object(id) => scene
                .truth
                .iter()
                .find(|o| o.id == id)
                .map(|o| o.velocity())
                .unwrap_or_else(Vector2::zeros),
            DetectionSource::Clutter => Vector2::zeros(),
        };
        let ob = match make_obstacle_belief(&belief, velocity) {
            Ok(ob) => ob,
            Err(Error::YawSigmaOutOfRange(_)) => {
                // A surviving detection with near-degenerate yaw spread:
                // cap the yaw variance just below the tan singularity and
                // keep the (very conservative) inflation.
                let mut capped = belief.clone();
                capped.var_total[THETA_IDX] =
                    (0.99 * std::f64::consts::FRAC_PI_2).powi(2);
                make_obstacle_belief(&capped, velocity)?
            }
            Err(e) => return Err(e),
        };
        out.push(ob);
    }
    Ok(out)
}

/// Runs one full simulated trip: per cycle it queries perception,
/// rebuilds and expands the tree from the current state, executes the
/// selected path for one replanning horizon with injected process noise,
/// and stops on goal arrival, ground-truth collision, or cycle budget
/// exhaustion. With no executable segment the vehicle brakes in place
/// for the horizon (a deadlock cycle).
pub fn execute(scene: &Scenario, trial_seed: u64) -> Result<RunTrace> {
    let cfg = &scene.planner;
    let motion = &scene.motion;
    let risk_cfg = &scene.risk;
    let goal = scene.goal.center();
    let dt = motion.dt;
    let horizon_steps = ((cfg.replan_horizon / dt).round() as usize).max(1);

    // Planning-time ego covariance: the deterministic baseline ignores
    // ego uncertainty; the true vehicle drifts identically in all modes.
    let plan_root_cov = if cfg.mode == Mode::Cl {
        Matrix2::zeros()
    } else {
        motion.initial_covariance
    };

    let mut plan_rng = ChaCha20Rng::seed_from_u64(trial_seed);
    plan_rng.set_stream(1);
    let mut noise_rng = ChaCha20Rng::seed_from_u64(trial_seed);
    noise_rng.set_stream(2);
    let step_noise = Normal::new(0.0, motion.process_noise[(0, 0)].sqrt())
        .expect("process noise std is finite and non-negative");

    let mut true_state = scene.ego_start;
    let mut sim_time = 0.0;
    let mut executed: Vec<ExecutedStep> = Vec::new();
    let mut cycles: Vec<CycleRecord> = Vec::new();
    let mut deadlock_cycles = 0usize;

    let finish = |status: RunStatus, executed: Vec<ExecutedStep>, cycles: Vec<CycleRecord>, deadlocks: usize| RunTrace {
        mode: cfg.mode,
        trial_seed,
        status,
        deadlock_cycles: deadlocks,
        executed,
        cycles,
    };

    if (true_state.position() - goal).norm() <= cfg.goal_radius {
        return Ok(finish(RunStatus::GoalReached, executed, cycles, 0));
    }

    for cycle in 0..cfg.max_cycles {
        // Perception and the mode-specific view of it.
        let report_obstacles = perceive(scene, &true_state, sim_time, cycle_seed(trial_seed, cycle))?;
        let plan_obstacles = baseline_mode_transform(&report_obstacles, cfg);

        // Fresh tree at the current state.
        let root_belief = StateBelief {
            mean: true_state,
            covariance: plan_root_cov,
        };
        let root_polygon = ego_polygon(&true_state, motion);
        let root_delta = total_risk_at(&root_polygon, &plan_root_cov, &plan_obstacles, 0.0, risk_cfg)?;
        let mut tree = PlanTree::new(root_belief, goal, cfg.goal_radius, root_delta);
        expand_tree(
            &mut tree,
            &plan_obstacles,
            cfg,
            motion,
            risk_cfg,
            &mut plan_rng,
            None,
        )?;

        let path = tree.select_path();
        let mut controls: Vec<ControlInput> = Vec::new();
        for &id in path.iter().skip(1) {
            controls.extend_from_slice(&tree.nodes[id].controls_from_parent);
        }
        controls.truncate(horizon_steps);
        let guarded = stop_guarded_prefix(
            &true_state,
            &plan_root_cov,
            &controls,
            &plan_obstacles,
            cfg,
            motion,
            risk_cfg,
        )?;
        controls.truncate(guarded);
        let deadlock = controls.is_empty();
        if deadlock {
            deadlock_cycles += 1;
        }
        let steps_to_run = if deadlock { horizon_steps } else { controls.len() };

        // Execute the segment on the true vehicle with injected noise,
        // scoring each reached state against the fused beliefs. A
        // deadlocked cycle runs the emergency-stop law instead.
        let mut cycle_risk_max = 0.0f64;
        let mut executed_this_cycle = 0usize;
        let mut terminal: Option<RunStatus> = None;
        // `controls` is empty on a deadlocked cycle, so iterate the count,
        // not the slice.
        #[allow(clippy::needless_range_loop)]
        for k in 0..steps_to_run {
            let ctrl = if deadlock {
                brake_control(&true_state, motion)
            } else {
                controls[k]
            };
            true_state = step(true_state, ctrl, motion);
            true_state.x += step_noise.sample(&mut noise_rng);
            true_state.y += step_noise.sample(&mut noise_rng);
            sim_time += dt;
            executed_this_cycle += 1;

            let report_cov =
                motion.initial_covariance + motion.process_noise * (k + 1) as f64;
            let polygon = ego_polygon(&true_state, motion);
            let risk = total_risk_at(
                &polygon,
                &report_cov,
                &report_obstacles,
                (k + 1) as f64 * dt,
                risk_cfg,
            )?;
            cycle_risk_max = cycle_risk_max.max(risk);
            let violation = !check_chance_constraint(risk, risk_cfg);
            executed.push(ExecutedStep {
                time: sim_time,
                x: true_state.x,
                y: true_state.y,
                heading: true_state.heading,
                speed: true_state.speed,
                risk,
                violation,
            });

            let hit = scene.truth.iter().any(|ob| {
                let c = ob.center_at(sim_time);
                boxes_intersect(
                    true_state.position(),
                    true_state.heading,
                    0.5 * motion.ego_length,
                    0.5 * motion.ego_width,
                    c,
                    ob.heading,
                    0.5 * ob.l,
                    0.5 * ob.w,
                )
            });
            if hit {
                terminal = Some(RunStatus::Collision);
                break;
            }
            if (true_state.position() - goal).norm() <= cfg.goal_radius {
                terminal = Some(RunStatus::GoalReached);
                break;
            }
        }

        cycles.push(CycleRecord {
            cycle,
            sim_time,
            tree_nodes: tree.nodes.len(),
            recorded_paths: tree.paths.len(),
            selected_nodes: path.len(),
            executed_steps: executed_this_cycle,
            tree_risk_max: tree.max_node_risk(),
            risk_max: cycle_risk_max,
            deadlock,
            obstacles: report_obstacles
                .iter()
                .map(|ob| ObstacleSnapshot {
                    x: ob.center.x,
                    y: ob.center.y,
                    heading: ob.heading,
                    half_length: ob.half_length,
                    half_width: ob.half_width,
                    semi_axis_a: ob.semi_axis_a,
                    semi_axis_b: ob.semi_axis_b,
                })
                .collect(),
        });

        if let Some(status) = terminal {
            return Ok(finish(status, executed, cycles, deadlock_cycles));
        }
    }
    Ok(finish(RunStatus::Timeout, executed, cycles, deadlock_cycles))
}
