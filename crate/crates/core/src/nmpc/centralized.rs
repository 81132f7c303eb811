use std::time::{Duration, Instant};

use nalgebra::{DVector, Vector2};

use super::local::vertex_rows;
use super::shooting::{self, Block, Coupling, Row, Term};
use super::{project_inputs, NmpcSettings, NmpcSolution, NmpcStatus, RobotSpec};
use crate::ca_solver::DualPairTrajectory;
use crate::dual_distance::{solve_dual_distance_with, support_multipliers, DualSettings, DualSolution, DualStatus};
use crate::error::NmpcError;
use crate::geometry::{enumerate_vertices, rotation_matrix, rotation_matrix_derivative, transform_base_polytope, Polytope};

/// All robots in one problem; the separation of every listed pair is
/// constrained directly instead of through fixed dual data.
#[derive(Debug, Clone)]
pub struct CentralizedProblem<'a> {
    pub robots: Vec<&'a RobotSpec>,
    pub z0: Vec<Vec<f64>>,
    pub u_prev: Vec<Vec<f64>>,
    pub warm_start: Option<Vec<Vec<Vec<f64>>>>,
    /// Robot index pairs `(i, j)` with `i < j`.
    pub pairs: Vec<(usize, usize)>,
    pub obstacles: Vec<Polytope>,
    pub d_min: f64,
    pub settings: NmpcSettings,
    /// Dual solutions of a previous solve, used to warm start the inner
    /// distance problems (aligned with `pairs`).
    pub warm_duals: Option<Vec<DualPairTrajectory>>,
}

#[derive(Debug, Clone)]
pub struct CentralizedSolution {
    pub robots: Vec<NmpcSolution>,
    /// Optimal duals at the returned trajectories, one per pair.
    pub duals: Vec<DualPairTrajectory>,
    pub objective: f64,
    pub status: NmpcStatus,
    pub iterations: usize,
    pub max_violation: f64,
    pub solve_time: Duration,
}

struct PairState {
    a: usize,
    /// Robot index, or `None` for a static obstacle.
    b: Option<usize>,
    obstacle: usize,
    sols: Vec<Option<DualSolution>>,
}

struct CentralCoupling<'a> {
    robots: &'a [&'a RobotSpec],
    obstacles: &'a [Polytope],
    obstacle_vertices: Vec<Vec<Vector2<f64>>>,
    pairs: Vec<PairState>,
    d_min: f64,
    vertex_margin: f64,
    horizon: usize,
}

fn s2(s: &DVector<f64>) -> Vector2<f64> {
    Vector2::new(s[0], s[1])
}

impl CentralCoupling<'_> {
    fn polytope(&self, r: usize, z: &[f64]) -> Polytope {
        transform_base_polytope(&self.robots[r].shape, &self.robots[r].model.pose(z)).expect("planar footprint")
    }
}

impl Coupling for CentralCoupling<'_> {
    fn refresh(&mut self, states: &[Vec<Vec<f64>>]) {
        let settings = DualSettings::default();
        for pi in 0..self.pairs.len() {
            for k in 1..=self.horizon {
                let pa = self.polytope(self.pairs[pi].a, &states[self.pairs[pi].a][k]);
                let pb = match self.pairs[pi].b {
                    Some(b) => self.polytope(b, &states[b][k]),
                    None => self.obstacles[self.pairs[pi].obstacle].clone(),
                };
                let prev = self.pairs[pi].sols[k - 1].as_ref();
                let sol = solve_dual_distance_with(&pa, &pb, &settings, prev).expect("planar footprints");
                let keep = match sol.status {
                    DualStatus::Optimal => Some(sol),
                    // Overlap: keep the last direction, or fall back to the centre line.
                    _ => {
                        let dir = prev.map(|p| s2(&p.s)).filter(|s| s.norm() > 0.5).or_else(|| {
                            let c = |p: &Polytope| {
                                let v = enumerate_vertices(p).ok()?;
                                Some(v.iter().fold(Vector2::zeros(), |a, b| a + b) / v.len().max(1) as f64)
                            };
                            let d = c(&pa)? - c(&pb)?;
                            (d.norm() > 1e-12).then(|| d / d.norm())
                        });
                        dir.and_then(|s| {
                            let (_, la) = support_multipliers(&pa, &s).ok()?;
                            let (_, lb) = support_multipliers(&pb, &(-s)).ok()?;
                            Some(DualSolution {
                                distance: -pa.b.dot(&la) - pb.b.dot(&lb),
                                lambda_12: la,
                                lambda_21: lb,
                                s: DVector::from_column_slice(&[s.x, s.y]),
                                status: sol.status,
                                iterations: 0,
                                point_1: sol.point_1.clone(),
                                point_2: sol.point_2.clone(),
                            })
                        })
                    }
                };
                if keep.is_some() {
                    self.pairs[pi].sols[k - 1] = keep;
                }
            }
        }
    }

    fn rows(&self, states: &[Vec<Vec<f64>>]) -> Vec<Row> {
        let mut rows = Vec::new();
        for pair in &self.pairs {
            for k in 1..=self.horizon {
                let Some(sol) = &pair.sols[k - 1] else { continue };
                let s = s2(&sol.s);
                if s.norm() <= 1e-9 {
                    continue;
                }
                match pair.b {
                    None => {
                        let support = self.obstacle_vertices[pair.obstacle]
                            .iter()
                            .map(|w| s.dot(w))
                            .fold(f64::NEG_INFINITY, f64::max);
                        let start = rows.len();
                        vertex_rows(
                            &mut rows,
                            self.robots[pair.a].vertices(),
                            &states[pair.a][k],
                            k,
                            &s,
                            support + self.d_min,
                            self.vertex_margin,
                        );
                        for r in &mut rows[start..] {
                            for t in &mut r.terms {
                                t.block = pair.a;
                            }
                        }
                    }
                    Some(b) => {
                        let za = &states[pair.a][k];
                        let zb = &states[b][k];
                        let pa = Vector2::new(za[0], za[1]);
                        let pb = Vector2::new(zb[0], zb[1]);
                        let (ra, dra) = (rotation_matrix(za[2]), rotation_matrix_derivative(za[2]));
                        let (rb, drb) = (rotation_matrix(zb[2]), rotation_matrix_derivative(zb[2]));
                        let va: Vec<(Vector2<f64>, f64)> =
                            self.robots[pair.a].vertices().iter().map(|v| (*v, s.dot(&(ra * v + pa)))).collect();
                        let vb: Vec<(Vector2<f64>, f64)> =
                            self.robots[b].vertices().iter().map(|v| (*v, s.dot(&(rb * v + pb)))).collect();
                        let min_a = va.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
                        let max_b = vb.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
                        for (v, sa) in va.iter().filter(|x| x.1 <= min_a + self.vertex_margin) {
                            for (w, sb) in vb.iter().filter(|x| x.1 >= max_b - self.vertex_margin) {
                                rows.push(Row {
                                    value: sa - sb - self.d_min,
                                    terms: vec![
                                        Term {
                                            block: pair.a,
                                            k,
                                            grad: [s.x, s.y, s.dot(&(dra * v))],
                                        },
                                        Term {
                                            block: b,
                                            k,
                                            grad: [-s.x, -s.y, -s.dot(&(drb * w))],
                                        },
                                    ],
                                });
                            }
                        }
                    }
                }
            }
        }
        rows
    }
}

fn validate(p: &CentralizedProblem) -> Result<(), NmpcError> {
    p.settings.validate()?;
    let m = p.robots.len();
    if p.z0.len() != m || p.u_prev.len() != m {
        return Err(NmpcError::Invalid("one initial state and previous input per robot".into()));
    }
    for (r, z) in p.robots.iter().zip(&p.z0) {
        if z.len() != r.model.state_dim() {
            return Err(NmpcError::Invalid("initial state has wrong length".into()));
        }
    }
    for &(i, j) in &p.pairs {
        if i >= m || j >= m || i == j {
            return Err(NmpcError::Invalid(format!("invalid pair ({i}, {j})")));
        }
    }
    if let Some(w) = &p.warm_start {
        if w.len() != m || w.iter().any(|u| u.len() != p.settings.horizon) {
            return Err(NmpcError::Invalid("warm start has wrong shape".into()));
        }
    }
    if !(p.d_min >= 0.0) {
        return Err(NmpcError::Invalid("d_min must be nonnegative".into()));
    }
    Ok(())
}

/// Solves the joint problem. Pair duals are not decision variables: they are
/// re-optimised for the current trajectories at every iteration, which
/// turns the bilevel constraint into a sequence of supporting-hyperplane
/// linearisations of the true distance.
pub fn solve_centralized_nmpc(problem: &CentralizedProblem) -> Result<CentralizedSolution, NmpcError> {
    validate(problem)?;
    let start = Instant::now();
    let st = &problem.settings;
    let blocks: Vec<Block> = problem
        .robots
        .iter()
        .enumerate()
        .map(|(r, spec)| Block {
            spec,
            z0: problem.z0[r].clone(),
            u_prev: problem.u_prev[r].clone(),
            refs: spec.reference.horizon(&problem.z0[r], st.horizon, st.dt),
        })
        .collect();
    let init: Vec<Vec<Vec<f64>>> = (0..problem.robots.len())
        .map(|r| {
            let raw = match &problem.warm_start {
                Some(w) => w[r].clone(),
                None => vec![problem.u_prev[r].clone(); st.horizon],
            };
            project_inputs(&raw, &problem.u_prev[r], &problem.robots[r].bounds, st.dt)
        })
        .collect();
    let mut pairs: Vec<PairState> = problem
        .pairs
        .iter()
        .enumerate()
        .map(|(pi, &(i, j))| PairState {
            a: i,
            b: Some(j),
            obstacle: 0,
            sols: match problem.warm_duals.as_ref().and_then(|w| w.get(pi)) {
                Some(w) if w.steps.len() == st.horizon => w.steps.iter().cloned().map(Some).collect(),
                _ => vec![None; st.horizon],
            },
        })
        .collect();
    for r in 0..problem.robots.len() {
        for o in 0..problem.obstacles.len() {
            pairs.push(PairState {
                a: r,
                b: None,
                obstacle: o,
                sols: vec![None; st.horizon],
            });
        }
    }
    let obstacle_vertices = problem
        .obstacles
        .iter()
        .map(enumerate_vertices)
        .collect::<Result<Vec<_>, _>>()?;
    let mut coupling = CentralCoupling {
        robots: &problem.robots,
        obstacles: &problem.obstacles,
        obstacle_vertices,
        pairs,
        d_min: problem.d_min,
        vertex_margin: st.vertex_margin,
        horizon: st.horizon,
    };
    let res = shooting::solve(&blocks, &mut coupling, init, st);
    let elapsed = start.elapsed();
    let duals = coupling
        .pairs
        .iter()
        .filter(|p| p.b.is_some())
        .map(|p| {
            let steps: Vec<DualSolution> = p.sols.iter().map(|s| s.clone().expect("refreshed")).collect();
            let infeasible = steps
                .iter()
                .map(|s| s.status != DualStatus::Optimal || s.distance < problem.d_min - st.violation_tol)
                .collect();
            DualPairTrajectory {
                i: p.a,
                j: p.b.expect("robot pair"),
                steps,
                infeasible,
            }
        })
        .collect();
    let robots = res
        .inputs
        .into_iter()
        .zip(res.states)
        .zip(&res.objectives)
        .map(|((inputs, states), &objective)| NmpcSolution {
            inputs,
            states,
            objective,
            status: res.status,
            iterations: res.iterations,
            max_violation: res.max_violation,
            solve_time: elapsed,
        })
        .collect();
    Ok(CentralizedSolution {
        robots,
        duals,
        objective: res.objectives.iter().sum(),
        status: res.status,
        iterations: res.iterations,
        max_violation: res.max_violation,
        solve_time: elapsed,
    })
}
