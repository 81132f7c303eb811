mod common;

use dualcoord::dual_distance::{feasibility_certificate, solve_dual_distance, supporting_hyperplanes, DualStatus};
use nalgebra::DVector;
use rand::SeedableRng;

#[test]
fn random_pairs_match_oracle() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut max_iter = 0;
    let mut total_iter = 0;
    for _ in 0..2000 {
        let (p1, p2, d) = common::random_disjoint_pair(&mut rng);
        let sol = solve_dual_distance(&p1, &p2).unwrap();
        assert_eq!(sol.status, DualStatus::Optimal, "oracle distance {d}");
        let err = (sol.distance - d).abs() / d.max(1.0);
        worst = worst.max(err);
        max_iter = max_iter.max(sol.iterations);
        total_iter += sol.iterations;
        let rep = feasibility_certificate(&p1, &p2, &sol.lambda_12, &sol.lambda_21, &sol.s, d - 1e-6);
        assert!(rep.feasible, "{rep:?}");
        let (h1, h2) = supporting_hyperplanes(&p1, &p2, &sol).unwrap();
        assert!((h1.offset - h2.offset - d).abs() <= 1e-6);
        let x = DVector::from_column_slice(&[sol.point_1[0], sol.point_1[1]]);
        assert!(h1.signed_value(&x).abs() <= 1e-6);
    }
    println!("worst rel err {worst:e}, max iter {max_iter}, mean iter {}", total_iter as f64 / 2000.0);
    assert!(worst <= 1e-6);
}
