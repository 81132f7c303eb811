use dualcoord::coordinator::RunMode;
use dualcoord::error_bound::{direct_constant, AcceptableError, ErrorTrace};
use dualcoord::geometry::{rectangle_base, Pose2};
use dualcoord::scenarios::{builtin_overtake, run_scenario};
use rand::{Rng, SeedableRng};

fn overtake_trace(mode: RunMode) -> ErrorTrace {
    let mut cfg = builtin_overtake();
    cfg.mode = mode;
    let log = run_scenario(&cfg).unwrap();
    assert!(log.abort.is_none());
    ErrorTrace::from_log(&log, AcceptableError::default()).unwrap()
}

#[test]
fn overtake_error_stays_below_bound() {
    let trace = overtake_trace(RunMode::Distributed);
    assert_eq!(trace.rows.len(), builtin_overtake().steps);
    let bad = trace.bound_violations(1e-9);
    assert!(bad.is_empty(), "{:?}", bad.first());
    assert!(trace.rows.iter().any(|r| r.e_predict > 1e-6), "views never differ");
    for r in &trace.rows {
        assert!(r.bound <= r.trivial_bound);
        assert!((r.c_i - 1.0).abs() < 1e-9 && (r.c_i_formula - 2f64.sqrt()).abs() < 1e-9);
        assert!(r.e_predict >= 0.0 && r.alpha_min > 0.0);
    }
}

#[test]
fn centralized_views_agree() {
    let trace = overtake_trace(RunMode::Centralized);
    assert!(!trace.rows.is_empty());
    for r in &trace.rows {
        assert!(r.e_predict <= 1e-12, "{r:?}");
        assert_eq!(r.bound, 0.0);
    }
}

#[test]
fn rectangle_direct_constant_is_one_at_any_pose() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let base = rectangle_base(4.5, 1.8);
    for _ in 0..100 {
        let pose = Pose2::new(
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
            rng.random_range(-4.0..4.0),
        );
        assert!((direct_constant(&base, &pose).unwrap().c - 1.0).abs() <= 1e-9);
    }
}
