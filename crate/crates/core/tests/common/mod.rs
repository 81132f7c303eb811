#![allow(dead_code)]

use dualcoord::dynamics::RobotModel;
use dualcoord::geometry::{oracle_distance, rectangle_base, transform_base_polytope, Polytope};
use dualcoord::nmpc::{
    solve_centralized_nmpc, solve_local_nmpc, CentralizedProblem, CostWeights, CouplingMode, InputBounds,
    LocalNmpcProblem, NeighborCoupling, NmpcSettings, NmpcStatus, Reference, RobotSpec,
};
use nalgebra::Vector2;
use rand::Rng;

/// Random convex polygon with `m` edges: vertices at sorted random angles on
/// an ellipse, rotated and translated.
pub fn random_polygon<R: Rng>(rng: &mut R, m: usize, center: Vector2<f64>) -> Polytope {
    loop {
        let mut angles: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let gaps_ok = angles.windows(2).all(|w| w[1] - w[0] > 0.05)
            && angles[0] + std::f64::consts::TAU - angles[m - 1] > 0.05;
        if !gaps_ok {
            continue;
        }
        let rx = rng.random_range(0.3..2.5);
        let ry = rng.random_range(0.3..2.5);
        let rot = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = f64::sin_cos(rot);
        let verts: Vec<Vector2<f64>> = angles
            .iter()
            .map(|t| {
                let p = Vector2::new(rx * t.cos(), ry * t.sin());
                Vector2::new(c * p.x - s * p.y, s * p.x + c * p.y) + center
            })
            .collect();
        // Every edge must subtend a nondegenerate angle so the polygon has exactly m rows.
        if let Ok(p) = Polytope::from_ccw_vertices(&verts) {
            if p.n_constraints() == m {
                return p;
            }
        }
    }
}

/// A random pair of disjoint polygons with 3 to 8 halfspaces each.
pub fn random_disjoint_pair<R: Rng>(rng: &mut R) -> (Polytope, Polytope, f64) {
    loop {
        let m1 = rng.random_range(3..=8);
        let m2 = rng.random_range(3..=8);
        let c1 = Vector2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let c2 = Vector2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let p1 = random_polygon(rng, m1, c1);
        let p2 = random_polygon(rng, m2, c2);
        let d = oracle_distance(&p1, &p2).unwrap();
        if d > 1e-3 {
            return (p1, p2, d);
        }
    }
}

fn consistency_robot(goal: [f64; 3]) -> RobotSpec {
    RobotSpec::new(
        RobotModel::Unicycle,
        rectangle_base(1.0, 0.6),
        CostWeights::diagonal(&[1.0, 1.0, 0.0], &[2.0, 2.0], &[1.0, 1.0]),
        InputBounds {
            u_min: vec![-2.0, -2.0],
            u_max: vec![2.0, 2.0],
            rate_max: vec![10.0, 10.0],
        },
        Reference::Goal { state: goal.to_vec() },
    )
    .unwrap()
}

fn placed(spec: &RobotSpec, states: &[Vec<f64>]) -> Vec<Polytope> {
    states[1..]
        .iter()
        .map(|z| transform_base_polytope(&spec.shape, &spec.model.pose(z)).unwrap())
        .collect()
}

pub struct Consistency {
    /// Closest predicted separation of the centralized plan.
    pub closest: f64,
    pub d_min: f64,
    /// Largest state deviation of each re-solved local plan.
    pub deviation: [f64; 2],
}

/// Two unicycles passing each other with overlapping lanes. Solves the joint
/// problem, fixes its pair duals and re-solves both local problems.
pub fn centralized_vs_local() -> Consistency {
    let specs = [consistency_robot([3.0, 0.35, 0.0]), consistency_robot([-3.0, -0.35, 0.0])];
    let z0 = vec![vec![-2.0, 0.35, 0.0], vec![2.0, -0.35, std::f64::consts::PI]];
    let settings = NmpcSettings {
        horizon: 15,
        dt: 0.1,
        ..NmpcSettings::default()
    };
    let d_min = 0.2;
    let central = solve_centralized_nmpc(&CentralizedProblem {
        robots: specs.iter().collect(),
        z0: z0.clone(),
        u_prev: vec![vec![0.0; 2]; 2],
        warm_start: None,
        pairs: vec![(0, 1)],
        obstacles: vec![],
        d_min,
        settings,
        warm_duals: None,
    })
    .unwrap();
    assert_eq!(central.status, NmpcStatus::Converged);
    let polys: Vec<Vec<Polytope>> = (0..2).map(|r| placed(&specs[r], &central.robots[r].states)).collect();
    let closest = (0..settings.horizon)
        .map(|k| oracle_distance(&polys[0][k], &polys[1][k]).unwrap())
        .fold(f64::INFINITY, f64::min);
    let mut deviation = [0.0; 2];
    for r in 0..2 {
        let coupling = NeighborCoupling::from_pair(r, &central.duals[0], &polys[0], &polys[1]);
        let local = solve_local_nmpc(&LocalNmpcProblem {
            robot: &specs[r],
            z0: z0[r].clone(),
            u_prev: vec![0.0; 2],
            warm_start: None,
            couplings: vec![coupling],
            d_min,
            mode: CouplingMode::SharedMargin,
            settings,
        })
        .unwrap();
        assert_eq!(local.status, NmpcStatus::Converged);
        deviation[r] = local
            .states
            .iter()
            .zip(&central.robots[r].states)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
    }
    Consistency {
        closest,
        d_min,
        deviation,
    }
}
