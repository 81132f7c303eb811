mod common;

#[test]
fn local_problems_reproduce_centralized_optimum() {
    let c = common::centralized_vs_local();
    // The separation constraint must bind for the check to mean anything.
    assert!(c.closest < c.d_min + 1e-4, "constraint inactive, closest {}", c.closest);
    for (r, dev) in c.deviation.iter().enumerate() {
        assert!(*dev <= 1e-3, "robot {r}: deviation {dev}");
    }
}
