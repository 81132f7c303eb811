//! Single-shooting SQP over the stacked inputs of one or more robots.
//!
//! Each iteration linearises the dynamics, builds a Gauss-Newton model of the
//! tracking cost and solves a QP with exact input box and rate constraints and
//! linearised collision rows relaxed by one elastic slack `xi`. Steps are
//! accepted by backtracking on `J + rho * max_violation`.

use nalgebra::{DMatrix, DVector};

use super::cost::{horizon_cost, state_error};
use super::{NmpcSettings, NmpcStatus, RobotSpec};
use crate::qp::{solve_qp, QpStatus};

pub(crate) struct Block<'a> {
    pub spec: &'a RobotSpec,
    pub z0: Vec<f64>,
    pub u_prev: Vec<f64>,
    pub refs: Vec<Vec<f64>>,
}

/// Gradient of a constraint row with respect to the pose `(x, y, psi)` of
/// robot `block` at horizon step `k`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Term {
    pub block: usize,
    pub k: usize,
    pub grad: [f64; 3],
}

/// One scalar constraint `value >= 0` and its pose gradients.
#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub value: f64,
    pub terms: Vec<Term>,
}

pub(crate) trait Coupling {
    /// Constraint rows for the given state trajectories (one per block).
    fn rows(&self, states: &[Vec<Vec<f64>>]) -> Vec<Row>;
    /// Called with the accepted iterate before it is linearised.
    fn refresh(&mut self, _states: &[Vec<Vec<f64>>]) {}
}

pub(crate) struct EngineResult {
    pub inputs: Vec<Vec<Vec<f64>>>,
    pub states: Vec<Vec<Vec<f64>>>,
    pub objectives: Vec<f64>,
    pub status: NmpcStatus,
    pub iterations: usize,
    pub max_violation: f64,
}

struct Eval {
    states: Vec<Vec<Vec<f64>>>,
    objectives: Vec<f64>,
    rows: Vec<Row>,
    violation: f64,
}

impl Eval {
    fn objective(&self) -> f64 {
        self.objectives.iter().sum()
    }
}

fn evaluate(blocks: &[Block], coupling: &dyn Coupling, u: &[Vec<Vec<f64>>], dt: f64) -> Eval {
    let states: Vec<Vec<Vec<f64>>> = blocks
        .iter()
        .zip(u)
        .map(|(b, ub)| {
            let mut traj = Vec::with_capacity(ub.len() + 1);
            traj.push(b.z0.clone());
            for uk in ub {
                let next = b.spec.model.step_unchecked(traj.last().expect("nonempty"), uk, dt);
                traj.push(next);
            }
            traj
        })
        .collect();
    let objectives = blocks
        .iter()
        .zip(u)
        .zip(&states)
        .map(|((b, ub), zb)| horizon_cost(zb, &b.refs, ub, &b.u_prev, &b.spec.weights))
        .collect();
    let rows = coupling.rows(&states);
    let violation = rows.iter().fold(0.0f64, |acc, r| acc.max(-r.value));
    Eval {
        states,
        objectives,
        rows,
        violation,
    }
}

/// Sensitivities `dz_k / dU` of one block, `k = 0..N`, each `nx x (N nu)`.
fn sensitivities(block: &Block, states: &[Vec<f64>], u: &[Vec<f64>], dt: f64) -> Vec<DMatrix<f64>> {
    let nx = block.spec.model.state_dim();
    let nu = block.spec.model.input_dim();
    let n = u.len();
    let mut out = Vec::with_capacity(n + 1);
    out.push(DMatrix::zeros(nx, n * nu));
    for k in 0..n {
        let (a, b) = block.spec.model.linearize(&states[k], &u[k], dt);
        let mut next = &a * &out[k];
        for r in 0..nx {
            for c in 0..nu {
                next[(r, k * nu + c)] += b[(r, c)];
            }
        }
        out.push(next);
    }
    out
}

pub(crate) fn solve(
    blocks: &[Block],
    coupling: &mut dyn Coupling,
    init: Vec<Vec<Vec<f64>>>,
    settings: &NmpcSettings,
) -> EngineResult {
    let dt = settings.dt;
    let n = settings.horizon;
    let sizes: Vec<usize> = blocks.iter().map(|b| n * b.spec.model.input_dim()).collect();
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let nvar = sizes.iter().sum::<usize>();

    let mut u = init;
    let mut rho = settings.penalty_init;
    coupling.refresh(&evaluate(blocks, coupling, &u, dt).states);
    let mut cur = evaluate(blocks, coupling, &u, dt);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < settings.max_iter {
        iterations += 1;

        let mut g = DMatrix::<f64>::zeros(nvar + 1, nvar + 1);
        let mut grad = DVector::<f64>::zeros(nvar + 1);
        let mut sens = Vec::with_capacity(blocks.len());
        for (bi, b) in blocks.iter().enumerate() {
            let s = sensitivities(b, &cur.states[bi], &u[bi], dt);
            let nu = b.spec.model.input_dim();
            let off = offsets[bi];
            let w = &b.spec.weights;
            for k in 1..=n {
                let e = state_error(&cur.states[bi][k], &b.refs[k]);
                let qs = &w.q_z * &s[k];
                let gk = s[k].transpose() * (&w.q_z * e) * 2.0;
                let hk = s[k].transpose() * qs * 2.0;
                grad.rows_mut(off, sizes[bi]).add_assign_vec(&gk);
                let mut blk = g.view_mut((off, off), (sizes[bi], sizes[bi]));
                blk += hk;
            }
            for k in 0..n {
                let uk = DVector::from_column_slice(&u[bi][k]);
                let prev = if k == 0 {
                    DVector::from_column_slice(&b.u_prev)
                } else {
                    DVector::from_column_slice(&u[bi][k - 1])
                };
                let gu = &w.q_u * &uk * 2.0 + &w.q_du * (&uk - &prev) * 2.0;
                let ok = off + k * nu;
                for i in 0..nu {
                    grad[ok + i] += gu[i];
                }
                if k + 1 < n {
                    let next = DVector::from_column_slice(&u[bi][k + 1]);
                    let gn = &w.q_du * (&next - &uk) * 2.0;
                    for i in 0..nu {
                        grad[ok + i] -= gn[i];
                    }
                }
                let diag_du = if k + 1 < n { 4.0 } else { 2.0 };
                let mut d = g.view_mut((ok, ok), (nu, nu));
                d += &w.q_u * 2.0 + &w.q_du * diag_du;
                if k + 1 < n {
                    let mut o = g.view_mut((ok, ok + nu), (nu, nu));
                    o -= &w.q_du * 2.0;
                    let mut o = g.view_mut((ok + nu, ok), (nu, nu));
                    o -= &w.q_du * 2.0;
                }
            }
            sens.push(s);
        }
        let hess_model = g.view((0, 0), (nvar, nvar)).into_owned();
        for i in 0..nvar {
            g[(i, i)] += 1e-6;
        }
        g[(nvar, nvar)] = 1e-4;
        grad[nvar] = rho;

        // Constraint rows C x >= d.
        let active_rows: Vec<&Row> = cur.rows.iter().filter(|r| r.value <= settings.prune_margin).collect();
        let n_bounds: usize = sizes.iter().map(|s| 4 * s).sum();
        let m = n_bounds + active_rows.len() + 1;
        let mut c = DMatrix::<f64>::zeros(m, nvar + 1);
        let mut dvec = DVector::<f64>::zeros(m);
        let mut row = 0;
        for (bi, b) in blocks.iter().enumerate() {
            let nu = b.spec.model.input_dim();
            let bd = &b.spec.bounds;
            for k in 0..n {
                for i in 0..nu {
                    let col = offsets[bi] + k * nu + i;
                    let uki = u[bi][k][i];
                    c[(row, col)] = 1.0;
                    dvec[row] = bd.u_min[i] - uki;
                    row += 1;
                    c[(row, col)] = -1.0;
                    dvec[row] = uki - bd.u_max[i];
                    row += 1;
                    let r = bd.rate_max[i] * dt;
                    let prev = if k == 0 { b.u_prev[i] } else { u[bi][k - 1][i] };
                    let diff = uki - prev;
                    c[(row, col)] = -1.0;
                    if k > 0 {
                        c[(row, col - nu)] = 1.0;
                    }
                    dvec[row] = diff - r;
                    row += 1;
                    c[(row, col)] = 1.0;
                    if k > 0 {
                        c[(row, col - nu)] = -1.0;
                    }
                    dvec[row] = -r - diff;
                    row += 1;
                }
            }
        }
        for r in &active_rows {
            for t in &r.terms {
                if t.k == 0 {
                    continue;
                }
                let s = &sens[t.block][t.k];
                let off = offsets[t.block];
                for col in 0..sizes[t.block] {
                    c[(row, off + col)] += t.grad[0] * s[(0, col)] + t.grad[1] * s[(1, col)] + t.grad[2] * s[(2, col)];
                }
            }
            c[(row, nvar)] = 1.0;
            dvec[row] = -r.value;
            row += 1;
        }
        c[(row, nvar)] = 1.0;

        let qp = solve_qp(&g, &grad, &c, &dvec);
        if qp.status != QpStatus::Optimal {
            break;
        }
        let step = qp.x.rows(0, nvar).into_owned();
        let xi = qp.x[nvar].max(0.0);
        let step_norm = step.amax();
        if step_norm <= settings.step_tol {
            converged = cur.violation <= settings.violation_tol;
            if converged || rho >= settings.penalty_max {
                break;
            }
        }
        if xi > 0.1 * settings.violation_tol {
            rho = (2.0 * rho).min(settings.penalty_max);
        }

        let gstep = grad.rows(0, nvar).dot(&step);
        let pred = -(gstep + 0.5 * step.dot(&(&hess_model * &step))) + rho * (cur.violation - xi).max(0.0);
        let phi = cur.objective() + rho * cur.violation;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<Vec<Vec<f64>>> = u
                .iter()
                .enumerate()
                .map(|(bi, ub)| {
                    let nu = blocks[bi].spec.model.input_dim();
                    ub.iter()
                        .enumerate()
                        .map(|(k, uk)| {
                            uk.iter()
                                .enumerate()
                                .map(|(i, v)| v + alpha * step[offsets[bi] + k * nu + i])
                                .collect()
                        })
                        .collect()
                })
                .collect();
            let ev = evaluate(blocks, coupling, &trial, dt);
            let phi_t = ev.objective() + rho * ev.violation;
            if phi_t <= phi - 1e-4 * alpha * pred.max(0.0) {
                accepted = Some((trial, ev));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, _)) = accepted else {
            converged = step_norm <= 1e3 * settings.step_tol && cur.violation <= settings.violation_tol;
            break;
        };
        u = trial;
        let probe = evaluate(blocks, coupling, &u, dt);
        coupling.refresh(&probe.states);
        cur = evaluate(blocks, coupling, &u, dt);
        if alpha * step_norm <= settings.step_tol && cur.violation <= settings.violation_tol {
            converged = true;
            break;
        }
    }

    let status = if cur.violation > settings.violation_tol {
        NmpcStatus::Infeasible
    } else if converged {
        NmpcStatus::Converged
    } else {
        NmpcStatus::MaxIter
    };
    EngineResult {
        inputs: u,
        states: cur.states,
        objectives: cur.objectives,
        status,
        iterations,
        max_violation: cur.violation,
    }
}

trait AddAssignVec {
    fn add_assign_vec(&mut self, v: &DVector<f64>);
}

impl AddAssignVec for nalgebra::DVectorViewMut<'_, f64> {
    fn add_assign_vec(&mut self, v: &DVector<f64>) {
        for i in 0..v.len() {
            self[i] += v[i];
        }
    }
}
