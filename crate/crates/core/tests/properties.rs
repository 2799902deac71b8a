//! Property-based checks of the library's numeric and planning invariants:
//! probability outputs stay in range, geometric constructions respect
//! symmetries, and the search tree never stores an over-budget node.

use chance_rrt::dynamics::{
    ego_polygon, propagate_covariance, steer_to, step, ControlInput, EgoState, MotionConfig,
    StateBelief,
};
use chance_rrt::normalize_angle;
use chance_rrt::planner::{
    boxes_intersect, expand_tree, Mode, PlanTree, PlannerConfig, SampleRegion,
};
use chance_rrt::risk::{
    collision_prob_obstacle, constraint_satisfaction_prob, erf_rational, ErfImpl, ErfTable,
    RiskConfig,
};
use chance_rrt::spatial::{
    lateral_longitudinal_sigma, make_obstacle_belief, orientation_margins, ObstacleBelief,
};
use chance_rrt::uncertainty::{
    attenuated_loss, fuse, BoxParams, DetectionBelief, DetectionSample, BOX_DIM, THETA_IDX,
};
use nalgebra::{Matrix2, Rotation2, Vector2};
use proptest::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::f64::consts::PI;

// ---------------------------------------------------------------- strategies

/// Cholesky-style factor guaranteeing a (strictly) positive definite 2x2.
fn psd_cov() -> impl Strategy<Value = Matrix2<f64>> {
    (0.05f64..1.2, -0.8f64..0.8, 0.05f64..1.2).prop_map(|(l11, l21, l22)| {
        let l = Matrix2::new(l11, 0.0, l21, l22);
        l * l.transpose()
    })
}

fn unit_direction() -> impl Strategy<Value = Vector2<f64>> {
    (-PI..PI).prop_map(|a| Vector2::new(a.cos(), a.sin()))
}

fn obstacle_belief() -> impl Strategy<Value = ObstacleBelief> {
    (
        -20.0f64..20.0,
        -20.0f64..20.0,
        -PI..PI,
        0.5f64..3.0,
        0.3f64..1.5,
        psd_cov(),
        -2.0f64..2.0,
        -2.0f64..2.0,
    )
        .prop_map(|(x, y, heading, hl, hw, cov, vx, vy)| ObstacleBelief {
            center: Vector2::new(x, y),
            heading,
            half_length: hl,
            half_width: hw,
            semi_axis_a: hl + 0.2,
            semi_axis_b: hw + 0.2,
            covariance: cov,
            velocity: Vector2::new(vx, vy),
        })
}

fn detection_samples() -> impl Strategy<Value = Vec<DetectionSample>> {
    let one = (
        -10.0f64..10.0,
        -10.0f64..10.0,
        -1.0f64..1.0,
        0.3f64..3.0,
        0.3f64..3.0,
        0.5f64..5.0,
        -PI..PI,
        -6.0f64..2.0,
        0.01f64..0.99,
    )
        .prop_map(|(x, y, z, h, w, l, theta, lv, p)| DetectionSample {
            box_params: BoxParams::from_array([x, y, z, h, w, l, theta]),
            log_variance: [lv; BOX_DIM],
            class_scores: vec![p, 1.0 - p],
        });
    proptest::collection::vec(one, 2..8)
}

fn motion() -> MotionConfig {
    MotionConfig::default()
}

// ------------------------------------------------------------------- angles

proptest! {
    #[test]
    fn normalized_angles_stay_in_range(a in -50.0f64..50.0) {
        let n = normalize_angle(a);
        prop_assert!(n > -PI && n <= PI);
        // Idempotent, and invariant under full turns.
        prop_assert!((normalize_angle(n) - n).abs() < 1e-12);
        let shifted = normalize_angle(a + 4.0 * PI);
        prop_assert!((shifted - n).abs() < 1e-9);
    }
}

// --------------------------------------------------------------------- erf

proptest! {
    #[test]
    fn erf_is_odd_bounded_monotone(x in -8.0f64..8.0, y in -8.0f64..8.0) {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let (elo, ehi) = (erf_rational(lo), erf_rational(hi));
        prop_assert!(elo.abs() <= 1.0 && ehi.abs() <= 1.0);
        prop_assert!(elo <= ehi + 1e-12);
        prop_assert!((erf_rational(-x) + erf_rational(x)).abs() < 1e-15);
    }

    #[test]
    fn erf_table_tracks_rational(x in -6.0f64..6.0) {
        let table = ErfTable::new(1e-3).unwrap();
        prop_assert!((table.eval(x) - erf_rational(x)).abs() <= 1e-5);
    }
}

// ------------------------------------------------------------- regression

proptest! {
    #[test]
    fn attenuated_loss_gradient_matches_finite_differences(
        residuals in proptest::collection::vec(0.05f64..3.0, 1..6),
        log_vars in proptest::collection::vec(-4.0f64..2.0, 6),
        flip in proptest::collection::vec(proptest::bool::ANY, 6),
    ) {
        let d = residuals.len();
        let res: Vec<f64> = residuals
            .iter()
            .zip(&flip)
            .map(|(&r, &f)| if f { -r } else { r })
            .collect();
        let lv = &log_vars[..d];
        let (_, grad) = attenuated_loss(&res, lv).unwrap();
        let h = 1e-6;
        for i in 0..d {
            let mut plus = lv.to_vec();
            let mut minus = lv.to_vec();
            plus[i] += h;
            minus[i] -= h;
            let (lp, _) = attenuated_loss(&res, &plus).unwrap();
            let (lm, _) = attenuated_loss(&res, &minus).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let scale = grad[i].abs().max(fd.abs()).max(1e-9);
            prop_assert!((grad[i] - fd).abs() / scale < 1e-4);
        }
    }
}

// ------------------------------------------------------------------ fusion

proptest! {
    #[test]
    fn fused_variances_decompose_and_bound_class_uncertainty(
        samples in detection_samples(),
    ) {
        let belief = fuse(&samples).unwrap();
        for d in 0..BOX_DIM {
            prop_assert!(belief.var_epistemic[d] >= 0.0);
            prop_assert!(belief.var_aleatoric[d] >= 0.0);
            let sum = belief.var_epistemic[d] + belief.var_aleatoric[d];
            let scale = sum.abs().max(1e-300);
            prop_assert!((belief.var_total[d] - sum).abs() / scale < 1e-12);
        }
        // Two classes: entropy capped at ln 2; information gain capped by
        // the predictive entropy.
        prop_assert!(belief.predictive_entropy >= 0.0);
        prop_assert!(belief.predictive_entropy <= 2f64.ln() + 1e-15);
        prop_assert!(belief.mutual_information >= 0.0);
        prop_assert!(belief.mutual_information <= belief.predictive_entropy + 1e-15);
    }
}

// -------------------------------------------------------------------- risk

proptest! {
    #[test]
    fn face_probability_is_a_probability_and_monotone_in_offset(
        a in unit_direction(),
        b1 in -10.0f64..10.0,
        b2 in -10.0f64..10.0,
        z in (-10.0f64..10.0, -10.0f64..10.0),
        cov in psd_cov(),
    ) {
        let cfg = RiskConfig::default();
        let z = Vector2::new(z.0, z.1);
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let p_lo = constraint_satisfaction_prob(&a, lo, &z, &cov, &cfg).unwrap();
        let p_hi = constraint_satisfaction_prob(&a, hi, &z, &cov, &cfg).unwrap();
        prop_assert!((0.0..=1.0).contains(&p_lo));
        prop_assert!((0.0..=1.0).contains(&p_hi));
        // Retreating the face boundary can only admit more probability mass.
        prop_assert!(p_lo <= p_hi + 1e-12);
    }

    #[test]
    fn collision_bound_is_translation_invariant(
        ob in obstacle_belief(),
        ego_x in 0.0f64..40.0,
        ego_y in 0.0f64..10.0,
        heading in -PI..PI,
        shift in (-30.0f64..30.0, -30.0f64..30.0),
    ) {
        let cfg = RiskConfig::default();
        let m = motion();
        let ego_cov = Matrix2::from_diagonal_element(0.02);
        let state = EgoState { x: ego_x, y: ego_y, heading, speed: 5.0 };
        let poly = ego_polygon(&state, &m);
        let p1 = collision_prob_obstacle(&poly, &ob, &ego_cov, &cfg).unwrap();

        let d = Vector2::new(shift.0, shift.1);
        let moved = EgoState { x: ego_x + d.x, y: ego_y + d.y, heading, speed: 5.0 };
        let poly2 = ego_polygon(&moved, &m);
        let mut ob2 = ob;
        ob2.center += d;
        let p2 = collision_prob_obstacle(&poly2, &ob2, &ego_cov, &cfg).unwrap();
        prop_assert!((p1 - p2).abs() < 1e-12);
    }

    #[test]
    fn collision_bound_never_exceeds_any_single_face(
        ob in obstacle_belief(),
        ego_x in 0.0f64..40.0,
        ego_y in 0.0f64..10.0,
        heading in -PI..PI,
    ) {
        let cfg = RiskConfig::default();
        let m = motion();
        let ego_cov = Matrix2::from_diagonal_element(0.02);
        let state = EgoState { x: ego_x, y: ego_y, heading, speed: 5.0 };
        let poly = ego_polygon(&state, &m);
        let bound = collision_prob_obstacle(&poly, &ob, &ego_cov, &cfg).unwrap();

        let cov_total = ob.covariance + ego_cov;
        let u = Vector2::new(ob.heading.cos(), ob.heading.sin());
        let v = Vector2::new(-ob.heading.sin(), ob.heading.cos());
        for face in &poly.faces {
            let support = ob.half_length * face.normal.dot(&u).abs()
                + ob.half_width * face.normal.dot(&v).abs();
            let single = constraint_satisfaction_prob(
                &face.normal,
                face.offset + support,
                &ob.center,
                &cov_total,
                &cfg,
            )
            .unwrap();
            prop_assert!(bound <= single + 1e-15);
        }
    }
}

#[test]
fn face_probability_limits() {
    // Huge directional variance: the face splits the mass in half.
    let cfg = RiskConfig::default();
    let a = Vector2::new(1.0, 0.0);
    let z = Vector2::new(3.0, 0.0);
    let wide = Matrix2::from_diagonal_element(1e9);
    let p = constraint_satisfaction_prob(&a, 0.0, &z, &wide, &cfg).unwrap();
    assert!((p - 0.5).abs() < 1e-3, "wide-variance limit gave {p}");
    // Vanishing variance: deterministic indicator on the margin sign.
    let tight = Matrix2::from_diagonal_element(1e-18);
    let inside = constraint_satisfaction_prob(&a, 5.0, &z, &tight, &cfg).unwrap();
    let outside = constraint_satisfaction_prob(&a, 1.0, &z, &tight, &cfg).unwrap();
    assert_eq!(inside, 1.0);
    assert_eq!(outside, 0.0);
}

// ---------------------------------------------------------------- dynamics

proptest! {
    #[test]
    fn covariance_propagation_preserves_symmetry_and_psd(
        cov in psd_cov(),
        angle in -PI..PI,
        q in 0.0f64..0.01,
    ) {
        let a = *Rotation2::new(angle).matrix();
        let noise = Matrix2::from_diagonal_element(q);
        let out = propagate_covariance(&cov, &a, &noise);
        prop_assert!((out[(0, 1)] - out[(1, 0)]).abs() < 1e-12);
        let eig = out.symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() >= -1e-12);
    }

    #[test]
    fn steering_respects_actuator_and_state_bounds(
        x in 0.0f64..50.0,
        y in 0.0f64..10.0,
        heading in -1.0f64..1.0,
        speed in 0.0f64..12.0,
        tx in 0.0f64..60.0,
        ty in 0.0f64..10.8,
    ) {
        let m = motion();
        let belief = StateBelief {
            mean: EgoState { x, y, heading, speed },
            covariance: Matrix2::from_diagonal_element(0.01),
        };
        let out = steer_to(&belief, Vector2::new(tx, ty), &m);
        for (state, ctrl) in &out.trajectory {
            prop_assert!(ctrl.steering.abs() <= m.steer_max + 1e-12);
            prop_assert!(ctrl.accel >= m.a_min - 1e-12 && ctrl.accel <= m.a_max + 1e-12);
            prop_assert!(state.speed >= 0.0 && state.speed <= m.v_max);
            prop_assert!(state.heading > -PI && state.heading <= PI);
        }
    }

    #[test]
    fn footprint_containment_is_translation_equivariant(
        x in -20.0f64..20.0,
        y in -20.0f64..20.0,
        heading in -PI..PI,
        px in -25.0f64..25.0,
        py in -25.0f64..25.0,
        dx in -15.0f64..15.0,
        dy in -15.0f64..15.0,
    ) {
        let m = motion();
        let s1 = EgoState { x, y, heading, speed: 0.0 };
        let s2 = EgoState { x: x + dx, y: y + dy, heading, speed: 0.0 };
        let p = Vector2::new(px, py);
        let q = Vector2::new(px + dx, py + dy);
        // Boundary-grazing points flip with round-off; skip the knife edge.
        let poly = ego_polygon(&s1, &m);
        let margin = poly
            .faces
            .iter()
            .map(|f| (f.offset - f.normal.dot(&p)).abs())
            .fold(f64::INFINITY, f64::min);
        prop_assume!(margin > 1e-9);
        prop_assert_eq!(poly.contains(&p), ego_polygon(&s2, &m).contains(&q));
    }

    #[test]
    fn box_intersection_is_symmetric(
        ax in -10.0f64..10.0, ay in -10.0f64..10.0, ah in -PI..PI,
        bx in -10.0f64..10.0, by in -10.0f64..10.0, bh in -PI..PI,
    ) {
        let a = (Vector2::new(ax, ay), ah, 2.25, 1.0);
        let b = (Vector2::new(bx, by), bh, 1.5, 0.8);
        prop_assert_eq!(
            boxes_intersect(a.0, a.1, a.2, a.3, b.0, b.1, b.2, b.3),
            boxes_intersect(b.0, b.1, b.2, b.3, a.0, a.1, a.2, a.3)
        );
    }
}

// ----------------------------------------------------------------- spatial

proptest! {
    #[test]
    fn orientation_margins_are_nonnegative_and_square_free(
        w in 0.3f64..4.0,
        l in 0.3f64..6.0,
        sigma in 0.0f64..1.4,
    ) {
        let (da, db) = orientation_margins(w, l, sigma).unwrap();
        prop_assert!(da >= 0.0 && db >= 0.0);
        prop_assert!((db - w / l * da).abs() < 1e-12);
        let (sq_a, sq_b) = orientation_margins(w, w, sigma).unwrap();
        prop_assert!(sq_a.abs() < 1e-12 && sq_b.abs() < 1e-12);
    }

    #[test]
    fn obstacle_belief_covariance_matches_inflation(
        x in 0.0f64..50.0,
        y in 0.0f64..10.0,
        theta in -PI..PI,
        w in 0.5f64..3.0,
        l in 0.5f64..5.0,
        var_pos in 0.0f64..0.25,
        var_ext in 0.0f64..0.25,
        var_theta in 0.0f64..0.15,
        t in 0.0f64..5.0,
    ) {
        let mut var_total = [0.0; BOX_DIM];
        var_total[0] = var_pos;
        var_total[1] = var_pos;
        var_total[3] = var_ext;
        var_total[4] = var_ext;
        var_total[5] = var_ext;
        var_total[THETA_IDX] = var_theta;
        let belief = DetectionBelief {
            mean: BoxParams::from_array([x, y, 0.75, 1.5, w, l, theta]),
            var_epistemic: [0.0; BOX_DIM],
            var_aleatoric: var_total,
            var_total,
            predictive_entropy: 0.0,
            mutual_information: 0.0,
            sample_count: 6,
        };
        let velocity = Vector2::new(1.0, -0.5);
        let ob = make_obstacle_belief(&belief, velocity).unwrap();

        prop_assert!(ob.semi_axis_a >= l / 2.0 - 1e-12);
        prop_assert!(ob.semi_axis_b >= w / 2.0 - 1e-12);

        let (sigma_lat, sigma_lon) = lateral_longitudinal_sigma(&var_total).unwrap();
        let (da, db) = orientation_margins(w, l, var_theta.sqrt()).unwrap();
        let mut expect = [(sigma_lon + da).powi(2), (sigma_lat + db).powi(2)];
        let mut eig: Vec<f64> = ob.covariance.symmetric_eigen().eigenvalues.iter().copied().collect();
        expect.sort_by(f64::total_cmp);
        eig.sort_by(f64::total_cmp);
        prop_assert!((expect[0] - eig[0]).abs() < 1e-9);
        prop_assert!((expect[1] - eig[1]).abs() < 1e-9);

        let predicted = ob.predicted_center(t);
        prop_assert!((predicted - (ob.center + velocity * t)).norm() < 1e-12);
    }
}

// -------------------------------------------------------------------- tree

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn expanded_trees_satisfy_structural_invariants(
        seed in 0u64..10_000,
        ob_x in 15.0f64..40.0,
        ob_y in 1.0f64..9.5,
    ) {
        let m = motion();
        let risk = RiskConfig { p_safe: 0.99, erf: ErfImpl::rational() };
        let cfg = PlannerConfig {
            mode: Mode::Pu,
            max_iterations: 25,
            candidates: 5,
            sample_region: SampleRegion { x_min: 0.0, x_max: 60.0, y_min: 0.0, y_max: 10.8 },
            ..PlannerConfig::default()
        };
        let goal = Vector2::new(50.0, 5.4);
        let root = StateBelief {
            mean: EgoState { x: 5.0, y: 5.4, heading: 0.0, speed: 5.0 },
            covariance: Matrix2::from_diagonal_element(0.01),
        };
        let obstacle = ObstacleBelief {
            center: Vector2::new(ob_x, ob_y),
            heading: 0.0,
            half_length: 2.25,
            half_width: 1.0,
            semi_axis_a: 2.5,
            semi_axis_b: 1.2,
            covariance: Matrix2::from_diagonal_element(0.05),
            velocity: Vector2::zeros(),
        };
        let mut tree = PlanTree::new(root, goal, cfg.goal_radius, 0.0);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        expand_tree(&mut tree, &[obstacle], &cfg, &m, &risk, &mut rng, None).unwrap();

        let budget = risk.risk_budget();
        for node in &tree.nodes {
            if let Some(parent) = node.parent {
                prop_assert!(parent < node.id, "parent id precedes child");
                prop_assert!(node.delta_t < budget, "stored node {} over budget", node.id);
                prop_assert_eq!(
                    node.steps_from_root,
                    tree.nodes[parent].steps_from_root + node.trajectory_from_parent.len()
                );
                prop_assert!(!node.trajectory_from_parent.is_empty());
            }
            prop_assert!((node.c_lb - (node.position() - goal).norm()).abs() < 1e-9);
        }
        for path in &tree.paths {
            prop_assert_eq!(path[0], tree.root);
            let last = &tree.nodes[*path.last().unwrap()];
            prop_assert!(last.c_lb <= tree.goal_radius + 1e-12);
            for pair in path.windows(2) {
                prop_assert_eq!(tree.nodes[pair[1]].parent, Some(pair[0]));
            }
        }
    }
}

// -------------------------------------------------------------- simulation

proptest! {
    #[test]
    fn kinematic_steps_keep_state_sane(
        x in -10.0f64..10.0,
        y in -10.0f64..10.0,
        heading in -PI..PI,
        speed in 0.0f64..15.0,
        steering in -2.0f64..2.0,
        accel in -8.0f64..8.0,
    ) {
        let m = motion();
        let s = EgoState { x, y, heading, speed };
        let next = step(s, ControlInput { steering, accel }, &m);
        prop_assert!(next.speed >= 0.0 && next.speed <= m.v_max);
        prop_assert!(next.heading > -PI && next.heading <= PI);
        // One step moves at most v_max * dt in position.
        let moved = (next.position() - s.position()).norm();
        prop_assert!(moved <= m.v_max * m.dt + 1e-12);
    }
}
