use std::time::Instant;

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::shooting::{self, Block, Coupling, Row, Term};
use super::{project_inputs, NmpcSettings, NmpcSolution, RobotSpec};
use crate::ca_solver::DualPairTrajectory;
use crate::dual_distance::{feasibility_certificate, support_multipliers};
use crate::dynamics::wrap_angle;
use crate::error::NmpcError;
use crate::geometry::{rotation_matrix, rotation_matrix_derivative, transform_base_polytope, Polytope};

/// How the fixed dual data of a neighbour enters the local problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// Keep `s` and the neighbour's multiplier fixed; this robot's multiplier
    /// is free. Each robot stays `d_min / 2` beyond the hyperplane midway
    /// between the two predicted supports, so two robots that both satisfy
    /// their constraints are at least `d_min` apart.
    #[default]
    SharedMargin,
    /// As [`CouplingMode::SharedMargin`] but each robot keeps the full
    /// `d_min` from the neighbour's predicted support.
    FullMargin,
    /// Keep both multipliers and `s` fixed: the distance bound with the
    /// previous multipliers and the equality `A(z)^T l_ij + s = 0`, which pins
    /// the heading at every step.
    FixedMultipliers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CouplingKind {
    Robot(usize),
    Obstacle(usize),
}

/// Fixed coupling data for one neighbour or obstacle over `k = 1..N`
/// (index `k - 1`). `s` points from the neighbour towards this robot and the
/// multipliers satisfy `A_own^T l_own + s = 0`, `A_nb^T l_nb - s = 0`.
#[derive(Debug, Clone)]
pub struct NeighborCoupling {
    pub kind: CouplingKind,
    pub s: Vec<Vector2<f64>>,
    pub lambda_own: Vec<DVector<f64>>,
    pub lambda_neighbor: Vec<DVector<f64>>,
    pub neighbor_polytopes: Vec<Polytope>,
    /// This robot's predicted polytopes the multipliers were computed for.
    pub own_polytopes: Vec<Polytope>,
}

impl NeighborCoupling {
    /// Coupling of robot `me` to the other member of a robot pair, from pair
    /// duals and the polytopes they were computed for.
    pub fn from_pair(
        me: usize,
        duals: &DualPairTrajectory,
        polytopes_i: &[Polytope],
        polytopes_j: &[Polytope],
    ) -> NeighborCoupling {
        let (s, lambda_own, lambda_neighbor) = duals.oriented(me);
        let (own, other, nb) = if me == duals.i {
            (polytopes_i, polytopes_j, duals.j)
        } else {
            (polytopes_j, polytopes_i, duals.i)
        };
        NeighborCoupling {
            kind: CouplingKind::Robot(nb),
            s,
            lambda_own,
            lambda_neighbor,
            neighbor_polytopes: other.to_vec(),
            own_polytopes: own.to_vec(),
        }
    }

    fn len_ok(&self, n: usize) -> bool {
        self.s.len() == n
            && self.lambda_own.len() == n
            && self.lambda_neighbor.len() == n
            && self.neighbor_polytopes.len() == n
            && self.own_polytopes.len() == n
    }

    /// `max_{y in neighbour} s^T y` at step `k`.
    pub fn neighbor_support(&self, k: usize) -> f64 {
        self.neighbor_polytopes[k - 1].b.dot(&self.lambda_neighbor[k - 1])
    }

    /// `min_{x in own prediction} s^T x` at step `k`.
    pub fn own_support(&self, k: usize) -> f64 {
        -self.own_polytopes[k - 1].b.dot(&self.lambda_own[k - 1])
    }
}

#[derive(Debug, Clone)]
pub struct LocalNmpcProblem<'a> {
    pub robot: &'a RobotSpec,
    pub z0: Vec<f64>,
    /// Last applied input.
    pub u_prev: Vec<f64>,
    pub warm_start: Option<Vec<Vec<f64>>>,
    pub couplings: Vec<NeighborCoupling>,
    pub d_min: f64,
    pub mode: CouplingMode,
    pub settings: NmpcSettings,
}

struct VertexEntry {
    k: usize,
    s: Vector2<f64>,
    rhs: f64,
}

struct FixedEntry {
    k: usize,
    q: Vector2<f64>,
    b0_lambda: f64,
    neighbor_support: f64,
    target: f64,
}

struct LocalCoupling<'a> {
    vertices: &'a [Vector2<f64>],
    vertex_entries: Vec<VertexEntry>,
    fixed_entries: Vec<FixedEntry>,
    d_min: f64,
    vertex_margin: f64,
}

impl Coupling for LocalCoupling<'_> {
    fn rows(&self, states: &[Vec<Vec<f64>>]) -> Vec<Row> {
        let traj = &states[0];
        let mut rows = Vec::new();
        for e in &self.vertex_entries {
            vertex_rows(&mut rows, self.vertices, &traj[e.k], e.k, &e.s, e.rhs, self.vertex_margin);
        }
        for e in &self.fixed_entries {
            let z = &traj[e.k];
            let p = Vector2::new(z[0], z[1]);
            let rq = rotation_matrix(z[2]) * e.q;
            let drq = rotation_matrix_derivative(z[2]) * e.q;
            rows.push(Row {
                value: -e.b0_lambda - p.dot(&rq) - e.neighbor_support - self.d_min,
                terms: vec![Term {
                    block: 0,
                    k: e.k,
                    grad: [-rq.x, -rq.y, -p.dot(&drq)],
                }],
            });
            let theta = wrap_angle(z[2] - e.target);
            for sign in [1.0, -1.0] {
                rows.push(Row {
                    value: sign * theta,
                    terms: vec![Term {
                        block: 0,
                        k: e.k,
                        grad: [0.0, 0.0, sign],
                    }],
                });
            }
        }
        rows
    }
}

/// Rows `s^T (R(psi) v + p) - rhs >= 0` for the footprint vertices near the
/// supporting one.
pub(crate) fn vertex_rows(
    rows: &mut Vec<Row>,
    vertices: &[Vector2<f64>],
    z: &[f64],
    k: usize,
    s: &Vector2<f64>,
    rhs: f64,
    margin: f64,
) {
    let p = Vector2::new(z[0], z[1]);
    let r = rotation_matrix(z[2]);
    let dr = rotation_matrix_derivative(z[2]);
    let vals: Vec<f64> = vertices.iter().map(|v| s.dot(&(r * v + p))).collect();
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    for (v, val) in vertices.iter().zip(&vals) {
        if *val <= min + margin {
            rows.push(Row {
                value: val - rhs,
                terms: vec![Term {
                    block: 0,
                    k,
                    grad: [s.x, s.y, s.dot(&(dr * v))],
                }],
            });
        }
    }
}

fn validate(problem: &LocalNmpcProblem) -> Result<(), NmpcError> {
    let st = &problem.settings;
    st.validate()?;
    let model = &problem.robot.model;
    if problem.z0.len() != model.state_dim() {
        return Err(NmpcError::Invalid(format!(
            "initial state has {} entries, expected {}",
            problem.z0.len(),
            model.state_dim()
        )));
    }
    if problem.u_prev.len() != model.input_dim() {
        return Err(NmpcError::Invalid("previous input has wrong length".into()));
    }
    if let Some(w) = &problem.warm_start {
        if w.len() != st.horizon || w.iter().any(|u| u.len() != model.input_dim()) {
            return Err(NmpcError::Invalid("warm start has wrong shape".into()));
        }
    }
    if !(problem.d_min >= 0.0) {
        return Err(NmpcError::Invalid("d_min must be nonnegative".into()));
    }
    for c in &problem.couplings {
        if !c.len_ok(st.horizon) {
            return Err(NmpcError::Invalid(format!("coupling {:?} must cover the horizon", c.kind)));
        }
    }
    Ok(())
}

fn build_coupling<'a>(problem: &'a LocalNmpcProblem) -> LocalCoupling<'a> {
    let mut vertex_entries = Vec::new();
    let mut fixed_entries = Vec::new();
    let shape = &problem.robot.shape;
    for c in &problem.couplings {
        let is_obstacle = matches!(c.kind, CouplingKind::Obstacle(_));
        for k in 1..=problem.settings.horizon {
            let s = c.s[k - 1];
            if s.norm() <= 1e-9 {
                continue;
            }
            let pi = c.neighbor_support(k);
            let mode = if is_obstacle { CouplingMode::FullMargin } else { problem.mode };
            match mode {
                CouplingMode::FullMargin => vertex_entries.push(VertexEntry {
                    k,
                    s,
                    rhs: pi + problem.d_min,
                }),
                CouplingMode::SharedMargin => vertex_entries.push(VertexEntry {
                    k,
                    s,
                    rhs: 0.5 * (c.own_support(k) + pi + problem.d_min),
                }),
                CouplingMode::FixedMultipliers => {
                    let lam = &c.lambda_own[k - 1];
                    let q_vec = shape.a.transpose() * lam;
                    let q = Vector2::new(q_vec[0], q_vec[1]);
                    let target = wrap_angle((-s.y).atan2(-s.x) - q.y.atan2(q.x));
                    fixed_entries.push(FixedEntry {
                        k,
                        q,
                        b0_lambda: shape.b.dot(lam),
                        neighbor_support: pi,
                        target,
                    });
                }
            }
        }
    }
    LocalCoupling {
        vertices: problem.robot.vertices(),
        vertex_entries,
        fixed_entries,
        d_min: problem.d_min,
        vertex_margin: problem.settings.vertex_margin,
    }
}

/// Solves one robot's problem with the neighbours' data held fixed.
pub fn solve_local_nmpc(problem: &LocalNmpcProblem) -> Result<NmpcSolution, NmpcError> {
    validate(problem)?;
    let start = Instant::now();
    let st = &problem.settings;
    let robot = problem.robot;
    let init = match &problem.warm_start {
        Some(w) => w.clone(),
        None => vec![problem.u_prev.clone(); st.horizon],
    };
    let init = project_inputs(&init, &problem.u_prev, &robot.bounds, st.dt);
    let block = Block {
        spec: robot,
        z0: problem.z0.clone(),
        u_prev: problem.u_prev.clone(),
        refs: robot.reference.horizon(&problem.z0, st.horizon, st.dt),
    };
    let mut coupling = build_coupling(problem);
    let res = shooting::solve(std::slice::from_ref(&block), &mut coupling, vec![init], st);
    Ok(NmpcSolution {
        inputs: res.inputs.into_iter().next().expect("one block"),
        states: res.states.into_iter().next().expect("one block"),
        objective: res.objectives[0],
        status: res.status,
        iterations: res.iterations,
        max_violation: res.max_violation,
        solve_time: start.elapsed(),
    })
}

/// Re-checks the coupling constraints of a local solution with an
/// independent evaluation: for every coupling and step the certificate of
/// `dist >= d_min` built from `s`, the neighbour's multiplier and this
/// robot's multiplier (its optimal one for `s` unless multipliers are fixed).
/// Returns the largest residual.
pub fn local_constraint_audit(problem: &LocalNmpcProblem, solution: &NmpcSolution) -> f64 {
    let mut worst = 0.0f64;
    let model = &problem.robot.model;
    for c in &problem.couplings {
        let is_obstacle = matches!(c.kind, CouplingKind::Obstacle(_));
        for k in 1..=problem.settings.horizon {
            let s = c.s[k - 1];
            if s.norm() <= 1e-9 {
                continue;
            }
            let own = transform_base_polytope(&problem.robot.shape, &model.pose(&solution.states[k]))
                .expect("planar footprint");
            let lam_own = if problem.mode == CouplingMode::FixedMultipliers && !is_obstacle {
                c.lambda_own[k - 1].clone()
            } else {
                match support_multipliers(&own, &s) {
                    Ok((_, l)) => l,
                    Err(_) => return f64::INFINITY,
                }
            };
            let s_vec = DVector::from_column_slice(&[s.x, s.y]);
            let rep = feasibility_certificate(
                &own,
                &c.neighbor_polytopes[k - 1],
                &lam_own,
                &c.lambda_neighbor[k - 1],
                &s_vec,
                problem.d_min,
            );
            worst = worst
                .max(rep.distance_residual)
                .max(rep.equality_12_residual)
                .max(rep.equality_21_residual)
                .max(rep.sign_residual);
        }
    }
    worst
}
