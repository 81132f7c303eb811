use super::*;
use crate::dynamics::RobotModel;
use crate::geometry::rectangle_base;
use crate::nmpc::{CostWeights, InputBounds, Reference};

fn unicycle(goal: [f64; 3]) -> RobotSpec {
    RobotSpec::new(
        RobotModel::Unicycle,
        rectangle_base(1.0, 1.0),
        CostWeights::diagonal(&[1.0, 1.0, 0.1], &[0.1, 0.1], &[0.1, 0.1]),
        InputBounds {
            u_min: vec![-2.0, -1.0],
            u_max: vec![2.0, 1.0],
            rate_max: vec![4.0, 4.0],
        },
        Reference::Goal { state: goal.to_vec() },
    )
    .unwrap()
}

fn settings() -> CoordinatorSettings {
    CoordinatorSettings {
        nmpc: NmpcSettings {
            horizon: 10,
            dt: 0.1,
            ..NmpcSettings::default()
        },
        d_min: 0.2,
        ..CoordinatorSettings::default()
    }
}

#[test]
fn neighbor_sets_radius() {
    let p = vec![Vector2::new(0.0, 0.0), Vector2::new(100.0, 0.0), Vector2::new(30.0, 0.0)];
    let all = neighbor_sets(&p, None);
    assert!(all.iter().all(|s| s.len() == 2));
    let far = neighbor_sets(&p[..2], Some(50.0));
    assert!(far[0].is_empty() && far[1].is_empty());
    let some = neighbor_sets(&p, Some(75.0));
    assert_eq!(some[2].len(), 2);
    assert!(!some[0].contains(&1));
}

#[test]
fn zero_steps_give_empty_log() {
    let mut w = World::new(vec![unicycle([0.0; 3])], vec![vec![0.0; 3]], vec![vec![0.0; 2]], vec![], settings()).unwrap();
    let log = run(&mut w, 0, RunMode::Distributed).unwrap();
    assert!(log.is_empty());
    assert_eq!(log.final_states, vec![vec![0.0; 3]]);
}

#[test]
fn single_robot_tracks_without_pair_traffic() {
    let mut w = World::new(
        vec![unicycle([2.0, 0.0, 0.0])],
        vec![vec![0.0; 3]],
        vec![vec![0.0; 2]],
        vec![],
        settings(),
    )
    .unwrap();
    let log = run(&mut w, 60, RunMode::Distributed).unwrap();
    assert!(log.steps.iter().all(|s| s.ca_pairs.is_empty()));
    let z = &log.final_states[0];
    assert!((z[0] - 2.0).abs() < 0.05 && z[1].abs() < 0.05, "{z:?}");
}

#[test]
fn parked_robots_stay_put() {
    let specs = vec![unicycle([0.0, 0.0, 0.0]), unicycle([20.0, 0.0, 0.0])];
    let states = vec![vec![0.0; 3], vec![20.0, 0.0, 0.0]];
    let mut w = World::new(specs, states.clone(), vec![vec![0.0; 2]; 2], vec![], settings()).unwrap();
    let log = run(&mut w, 5, RunMode::Distributed).unwrap();
    for s in &log.steps {
        for u in &s.inputs {
            assert!(u.iter().all(|v| v.abs() < 1e-6), "{u:?}");
        }
        assert_eq!(s.ca_pairs.len(), 1);
    }
    let first = &w.bus().read_duals((0, 1), 1).unwrap().duals;
    let last = &w.bus().read_duals((0, 1), 5).unwrap().duals;
    assert!((first.steps[0].distance - last.steps[0].distance).abs() < 1e-6);
    assert_eq!(log.final_states, states);
}

#[test]
fn head_on_swap_is_safe() {
    let specs = vec![unicycle([4.0, 0.3, 0.0]), unicycle([-4.0, -0.3, 0.0])];
    let states = vec![vec![-4.0, 0.3, 0.0], vec![4.0, -0.3, 0.0]];
    for mode in [RunMode::Distributed, RunMode::Centralized] {
        let mut w = World::new(specs.clone(), states.clone(), vec![vec![0.0; 2]; 2], vec![], settings()).unwrap();
        let log = run(&mut w, 150, mode).unwrap();
        assert!(log.abort.is_none());
        let audit = safety_audit(&log, 0.2 - 1e-3);
        assert!(audit.is_safe(), "{mode:?}: {:?}", audit.violations.first());
    }
}

#[test]
fn stale_messages_are_realigned() {
    let specs = vec![unicycle([0.0, 0.0, 0.0]), unicycle([20.0, 0.0, 0.0])];
    let states = vec![vec![0.0; 3], vec![20.0, 0.0, 0.0]];
    let st = CoordinatorSettings { delay: 3, ..settings() };
    let mut w = World::new(specs, states, vec![vec![0.0; 2]; 2], vec![], st).unwrap();
    for _ in 0..6 {
        w.step(RunMode::Distributed).unwrap();
    }
    let msg = w.bus().read_duals((0, 1), 6).unwrap();
    assert_eq!(msg.stamp, 2);
    assert_eq!(staleness(msg.stamp, 6), 3);
}

#[test]
fn obstacle_is_respected() {
    let obstacle = Polytope::axis_box(&[1.5, -1.0], &[2.5, 1.0]).unwrap();
    let mut w = World::new(
        vec![unicycle([4.0, 0.0, 0.0])],
        vec![vec![0.0; 3]],
        vec![vec![0.0; 2]],
        vec![obstacle.clone()],
        settings(),
    )
    .unwrap();
    let log = run(&mut w, 80, RunMode::Distributed).unwrap();
    for s in &log.steps {
        let p = transform_base_polytope(&log.shapes[0], &log.models[0].pose(&s.states[0])).unwrap();
        assert!(oracle_distance(&p, &obstacle).unwrap() >= 0.2 - 1e-3);
    }
}
