//! Nonlinear MPC for one robot (local, with fixed coupling data) or all robots
//! jointly (centralized). Both share one single-shooting SQP engine.

mod centralized;
mod cost;
mod local;
mod shooting;

pub use centralized::{solve_centralized_nmpc, CentralizedProblem, CentralizedSolution};
pub use cost::{horizon_cost, stage_cost, CostWeights};
pub use local::{
    local_constraint_audit, solve_local_nmpc, CouplingKind, CouplingMode, LocalNmpcProblem, NeighborCoupling,
};

use std::time::Duration;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::dynamics::RobotModel;
use crate::error::NmpcError;
use crate::geometry::{enumerate_vertices, Polytope};

/// Box and per-second rate limits on the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    /// Maximum change per second; applied per step as `rate_max * dt`.
    pub rate_max: Vec<f64>,
}

impl InputBounds {
    pub fn validate(&self, nu: usize) -> Result<(), NmpcError> {
        if self.u_min.len() != nu || self.u_max.len() != nu || self.rate_max.len() != nu {
            return Err(NmpcError::Invalid(format!("input bounds must have {nu} entries")));
        }
        for i in 0..nu {
            if !(self.u_min[i] <= self.u_max[i]) || !(self.rate_max[i] > 0.0) {
                return Err(NmpcError::Invalid(format!("inconsistent bounds for input {i}")));
            }
        }
        Ok(())
    }
}

/// Tracking target over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    /// A constant goal state.
    Goal { state: Vec<f64> },
    /// Lane keeping for the bicycle model: lateral position, heading and
    /// speed targets; the longitudinal target advances at the target speed.
    Lane { y: f64, psi: f64, v: f64 },
    /// Explicit states for `k = 0..N`; the last one is held beyond its end.
    Trajectory { states: Vec<Vec<f64>> },
    /// Planar polyline followed at constant speed from the point closest to
    /// the current position. Targets are `[x, y, heading, speed]` cut to the
    /// state dimension; the end point is held.
    Path { points: Vec<[f64; 2]>, speed: f64 },
}

impl Reference {
    pub fn at(&self, k: usize, z0: &[f64], dt: f64) -> Vec<f64> {
        match self {
            Reference::Goal { state } => state.clone(),
            Reference::Lane { y, psi, v } => vec![z0[0] + v * dt * k as f64, *y, *psi, *v],
            Reference::Trajectory { states } => states[k.min(states.len() - 1)].clone(),
            Reference::Path { points, speed } => {
                let s = project_on_path(points, z0[0], z0[1]) + speed * dt * k as f64;
                let (p, heading, at_end) = point_on_path(points, s);
                let v = if at_end { 0.0 } else { *speed };
                let mut out = vec![p[0], p[1], heading, v];
                out.truncate(z0.len());
                out
            }
        }
    }

    pub fn horizon(&self, z0: &[f64], n: usize, dt: f64) -> Vec<Vec<f64>> {
        (0..=n).map(|k| self.at(k, z0, dt)).collect()
    }
}

/// Everything about a robot that does not change between solves.
#[derive(Debug, Clone)]
pub struct RobotSpec {
    pub model: RobotModel,
    /// Footprint in the body frame.
    pub shape: Polytope,
    pub weights: CostWeights,
    pub bounds: InputBounds,
    pub reference: Reference,
    vertices: Vec<Vector2<f64>>,
}

impl RobotSpec {
    pub fn new(
        model: RobotModel,
        shape: Polytope,
        weights: CostWeights,
        bounds: InputBounds,
        reference: Reference,
    ) -> Result<Self, NmpcError> {
        model.validate()?;
        weights.validate(model.state_dim(), model.input_dim())?;
        bounds.validate(model.input_dim())?;
        let vertices = enumerate_vertices(&shape)?;
        if vertices.is_empty() {
            return Err(NmpcError::Invalid("robot shape is empty".into()));
        }
        let ref_len = match &reference {
            Reference::Goal { state } => state.len(),
            Reference::Lane { .. } => 4,
            Reference::Trajectory { states } => {
                if states.is_empty() {
                    return Err(NmpcError::Invalid("empty reference trajectory".into()));
                }
                states[0].len()
            }
            Reference::Path { points, speed } => {
                if points.len() < 2 || !(*speed >= 0.0) || points.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(NmpcError::Invalid("path needs two finite points and a speed".into()));
                }
                model.state_dim()
            }
        };
        if ref_len != model.state_dim() {
            return Err(NmpcError::Invalid(format!(
                "reference has {ref_len} components, state has {}",
                model.state_dim()
            )));
        }
        Ok(RobotSpec {
            model,
            shape,
            weights,
            bounds,
            reference,
            vertices,
        })
    }

    /// Body-frame vertices of the footprint.
    pub fn vertices(&self) -> &[Vector2<f64>] {
        &self.vertices
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmpcSettings {
    pub horizon: usize,
    pub dt: f64,
    pub max_iter: usize,
    /// Stop when the infinity norm of the step falls below this.
    pub step_tol: f64,
    /// Largest constraint violation accepted as feasible.
    pub violation_tol: f64,
    pub penalty_init: f64,
    pub penalty_max: f64,
    /// Constraint rows whose value exceeds this are left out of the QP.
    pub prune_margin: f64,
    /// Footprint vertices further than this from the supporting one are ignored.
    pub vertex_margin: f64,
}

impl Default for NmpcSettings {
    fn default() -> Self {
        NmpcSettings {
            horizon: 15,
            dt: 0.05,
            max_iter: 50,
            step_tol: 1e-7,
            violation_tol: 1e-4,
            penalty_init: 1e4,
            penalty_max: 1e6,
            prune_margin: 4.0,
            vertex_margin: 1.0,
        }
    }
}

impl NmpcSettings {
    pub fn validate(&self) -> Result<(), NmpcError> {
        if self.horizon == 0 {
            return Err(NmpcError::Invalid("horizon must be at least 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(NmpcError::Invalid("dt must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NmpcStatus {
    Converged,
    MaxIter,
    Infeasible,
}

impl NmpcStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            NmpcStatus::Converged => "converged",
            NmpcStatus::MaxIter => "max_iter",
            NmpcStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone)]
pub struct NmpcSolution {
    /// `u_0 .. u_{N-1}`.
    pub inputs: Vec<Vec<f64>>,
    /// `z_0 .. z_N`.
    pub states: Vec<Vec<f64>>,
    pub objective: f64,
    pub status: NmpcStatus,
    pub iterations: usize,
    pub max_violation: f64,
    pub solve_time: Duration,
}

/// Clamps a warm start into the box and rate limits, step by step.
pub fn project_inputs(inputs: &[Vec<f64>], u_prev: &[f64], bounds: &InputBounds, dt: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(inputs.len());
    let mut prev = u_prev.to_vec();
    for u in inputs {
        let mut v = u.clone();
        for i in 0..v.len() {
            let r = bounds.rate_max[i] * dt;
            let lo = bounds.u_min[i].max(prev[i] - r);
            let hi = bounds.u_max[i].min(prev[i] + r);
            v[i] = if lo <= hi {
                v[i].clamp(lo, hi)
            } else {
                // Previous input outside the box: move towards it at the rate limit.
                (prev[i] - r).max(bounds.u_min[i]).min(prev[i] + r)
            };
        }
        prev = v.clone();
        out.push(v);
    }
    out
}

/// `[u_1, .., u_{N-1}, u_{N-1}]`.
pub fn shift_inputs(inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    crate::dynamics::shift_and_augment(inputs)
}

/// Arc length of the point of `points` closest to `(x, y)`.
fn project_on_path(points: &[[f64; 2]], x: f64, y: f64) -> f64 {
    let q = Vector2::new(x, y);
    let mut best = (f64::INFINITY, 0.0);
    let mut s0 = 0.0;
    for w in points.windows(2) {
        let a = Vector2::from(w[0]);
        let seg = Vector2::from(w[1]) - a;
        let len = seg.norm();
        let tau = if len > 0.0 { ((q - a).dot(&seg) / (len * len)).clamp(0.0, 1.0) } else { 0.0 };
        let d = (a + seg * tau - q).norm();
        if d < best.0 {
            best = (d, s0 + tau * len);
        }
        s0 += len;
    }
    best.1
}

/// Point and tangent heading at arc length `s`, and whether `s` is past the end.
fn point_on_path(points: &[[f64; 2]], s: f64) -> (Vector2<f64>, f64, bool) {
    let mut rest = s.max(0.0);
    let mut last_heading = 0.0;
    for w in points.windows(2) {
        let a = Vector2::from(w[0]);
        let seg = Vector2::from(w[1]) - a;
        let len = seg.norm();
        if len > 0.0 {
            last_heading = seg.y.atan2(seg.x);
            if rest <= len {
                return (a + seg * (rest / len), last_heading, false);
            }
        }
        rest -= len;
    }
    (Vector2::from(points[points.len() - 1]), last_heading, true)
}
