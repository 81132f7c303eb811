mod common;

use dualcoord::ca_solver::solve_ca_pair;
use dualcoord::dual_distance::{feasibility_certificate, solve_dual_distance, solve_dual_distance_with, DualSettings};
use dualcoord::dynamics::{rollout, RobotModel, VehicleParams};
use dualcoord::error_bound::{dist_predicted_by_i, dist_predicted_by_j, prediction_error, prediction_bound};
use dualcoord::geometry::{
    enumerate_vertices, oracle_distance, rectangle_base, rotation_matrix, transform_base_polytope, vehicle_polytope,
    Pose2,
};
use dualcoord::nmpc::{project_inputs, shift_inputs, InputBounds};
use nalgebra::{DVector, Vector2};
use proptest::prelude::*;
use rand::SeedableRng;

fn pose() -> impl Strategy<Value = Pose2> {
    (-20.0..20.0f64, -20.0..20.0f64, -3.2..3.2f64).prop_map(|(x, y, p)| Pose2::new(x, y, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn placed_vertices_are_moved_base_vertices(p in pose(), h in 0.5..6.0f64, w in 0.3..3.0f64) {
        let base = rectangle_base(h, w);
        let placed = transform_base_polytope(&base, &p).unwrap();
        let r = rotation_matrix(p.psi);
        for v in enumerate_vertices(&base).unwrap() {
            let q = r * v + p.position();
            prop_assert!(placed.contains(&DVector::from_column_slice(q.as_slice()), 1e-9));
        }
        prop_assert_eq!(enumerate_vertices(&placed).unwrap().len(), 4);
    }

    #[test]
    fn oracle_distance_is_rigid_invariant(seed in any::<u64>(), p in pose()) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (a, b, d) = common::random_disjoint_pair(&mut rng);
        prop_assert!((oracle_distance(&b, &a).unwrap() - d).abs() <= 1e-9 * d.max(1.0));
        let ta = transform_base_polytope(&a, &p).unwrap();
        let tb = transform_base_polytope(&b, &p).unwrap();
        prop_assert!((oracle_distance(&ta, &tb).unwrap() - d).abs() <= 1e-8 * d.max(1.0));
    }

    #[test]
    fn dual_solution_is_a_certificate(seed in any::<u64>()) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (a, b, d) = common::random_disjoint_pair(&mut rng);
        let sol = solve_dual_distance(&a, &b).unwrap();
        prop_assert!((sol.distance - d).abs() <= 1e-6 * d.max(1.0));
        prop_assert!(sol.lambda_12.iter().chain(sol.lambda_21.iter()).all(|&l| l >= 0.0));
        prop_assert!(sol.s.norm() <= 1.0 + 1e-9);
        let rep = feasibility_certificate(&a, &b, &sol.lambda_12, &sol.lambda_21, &sol.s, d - 1e-6);
        prop_assert!(rep.feasible, "{:?}", rep);
        // Swapping the polytopes flips s and swaps the multipliers.
        let swapped = solve_dual_distance(&b, &a).unwrap();
        prop_assert!((swapped.distance - sol.distance).abs() <= 1e-6 * d.max(1.0));
        prop_assert!((swapped.s + &sol.s).norm() <= 1e-5);
    }

    #[test]
    fn warm_start_keeps_the_optimum(seed in any::<u64>(), dx in -0.3..0.3f64, dy in -0.3..0.3f64) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (a, b, _) = common::random_disjoint_pair(&mut rng);
        let moved = b.translated(&DVector::from_column_slice(&[dx, dy]));
        let d = oracle_distance(&a, &moved).unwrap();
        prop_assume!(d > 1e-3);
        let cold = solve_dual_distance(&a, &b).unwrap();
        let warm = solve_dual_distance_with(&a, &moved, &DualSettings::default(), Some(&cold)).unwrap();
        prop_assert!((warm.distance - d).abs() <= 1e-6 * d.max(1.0));
    }

    #[test]
    fn prediction_error_within_bound_for_moved_vehicles(
        pi in pose(), gap in 3.0..15.0f64, heading in -3.2..3.2f64,
        di in (-0.5..0.5f64, -0.5..0.5f64, -0.2..0.2f64),
        dj in (-0.5..0.5f64, -0.5..0.5f64, -0.2..0.2f64),
    ) {
        let pj = Pose2::new(pi.x + gap * heading.cos(), pi.y + gap * heading.sin(), -pi.psi);
        let (h, w) = (4.5, 1.8);
        let prev_i = vehicle_polytope(&pi, h, w);
        let prev_j = vehicle_polytope(&pj, h, w);
        prop_assume!(oracle_distance(&prev_i, &prev_j).unwrap() > 1e-3);
        let duals = solve_ca_pair(0, 1, std::slice::from_ref(&prev_i), std::slice::from_ref(&prev_j), 0.5, None);
        let sol = &duals.steps[0];
        let now_i = vehicle_polytope(&Pose2::new(pi.x + di.0, pi.y + di.1, pi.psi + di.2), h, w);
        let now_j = vehicle_polytope(&Pose2::new(pj.x + dj.0, pj.y + dj.1, pj.psi + dj.2), h, w);
        let e = prediction_error(
            dist_predicted_by_i(&now_i.b, &prev_j.b, &sol.lambda_12, &sol.lambda_21),
            dist_predicted_by_j(&prev_i.b, &now_j.b, &sol.lambda_12, &sol.lambda_21),
        );
        let bound = prediction_bound(&now_i.b, &prev_i.b, &now_j.b, &prev_j.b, 1.0, 1.0);
        prop_assert!(e <= bound + 1e-9, "e {} bound {}", e, bound);
    }

    #[test]
    fn coasting_bicycle_drives_straight(p in pose(), v in 0.0..30.0f64, steps in 1usize..40) {
        let model = RobotModel::Bicycle(VehicleParams::default());
        let z = rollout(&model, &[p.x, p.y, p.psi, v], &vec![vec![0.0, 0.0]; steps], 0.05).unwrap();
        let end = &z[steps];
        let travelled = v * 0.05 * steps as f64;
        prop_assert!((end[0] - (p.x + travelled * p.psi.cos())).abs() <= 1e-9 * (1.0 + travelled));
        prop_assert!((end[1] - (p.y + travelled * p.psi.sin())).abs() <= 1e-9 * (1.0 + travelled));
        prop_assert!((end[2] - p.psi).abs() <= 1e-12 && (end[3] - v).abs() <= 1e-12);
    }

    #[test]
    fn unicycle_turning_in_place_keeps_position(p in pose(), omega in -2.0..2.0f64, steps in 1usize..40) {
        let z = rollout(&RobotModel::Unicycle, &[p.x, p.y, p.psi], &vec![vec![0.0, omega]; steps], 0.05).unwrap();
        let end = &z[steps];
        prop_assert!(Vector2::new(end[0] - p.x, end[1] - p.y).norm() <= 1e-12);
        prop_assert!((end[2] - (p.psi + omega * 0.05 * steps as f64)).abs() <= 1e-9);
    }

    #[test]
    fn projected_inputs_respect_box_and_rate(
        raw in prop::collection::vec((-10.0..10.0f64, -1.0..1.0f64), 1..20),
        prev in (-4.0..4.0f64, -0.3..0.3f64),
    ) {
        let bounds = InputBounds { u_min: vec![-4.0, -0.3], u_max: vec![4.0, 0.3], rate_max: vec![20.0, 0.2] };
        let dt = 0.05;
        let raw: Vec<Vec<f64>> = raw.into_iter().map(|(a, d)| vec![a, d]).collect();
        let out = project_inputs(&raw, &[prev.0, prev.1], &bounds, dt);
        let mut last = vec![prev.0, prev.1];
        for u in &out {
            for i in 0..2 {
                prop_assert!(u[i] >= bounds.u_min[i] - 1e-12 && u[i] <= bounds.u_max[i] + 1e-12);
                prop_assert!((u[i] - last[i]).abs() <= bounds.rate_max[i] * dt + 1e-12);
            }
            last = u.clone();
        }
        let shifted = shift_inputs(&out);
        prop_assert_eq!(shifted.len(), out.len());
        prop_assert_eq!(shifted.last(), out.last());
    }
}
