//! Prediction error of the distributed scheme and its bounds.
//!
//! In a distributed round robot `i` evaluates the pair distance with its own
//! new polytope and the neighbour's previous prediction, robot `j` the other
//! way round. Both use the same pair duals, so the two views differ only
//! through how much the `b` vectors moved between rounds.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::coordinator::{PairTraceData, SimulationLog};
use crate::error::BoundError;
use crate::geometry::{rotation_matrix, Polytope, Pose2};

/// Relative singular-value cutoff used for rank decisions.
const RANK_TOL: f64 = 1e-10;

/// Largest heading step of the grid used by [`max_b_displacement`].
const PSI_GRID_STEP: f64 = 0.01;

/// Distance as seen by robot `i`: its own new `b`, the neighbour's old one.
pub fn dist_predicted_by_i(
    b_i_now: &DVector<f64>,
    b_j_prev: &DVector<f64>,
    lambda_ij: &DVector<f64>,
    lambda_ji: &DVector<f64>,
) -> f64 {
    -b_i_now.dot(lambda_ij) - b_j_prev.dot(lambda_ji)
}

/// Distance as seen by robot `j`.
pub fn dist_predicted_by_j(
    b_i_prev: &DVector<f64>,
    b_j_now: &DVector<f64>,
    lambda_ij: &DVector<f64>,
    lambda_ji: &DVector<f64>,
) -> f64 {
    -b_i_prev.dot(lambda_ij) - b_j_now.dot(lambda_ji)
}

pub fn prediction_error(dist_pi: f64, dist_pj: f64) -> f64 {
    (dist_pi - dist_pj).abs()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolytopeConstant {
    pub c: f64,
}

/// `||(A^T)^+||_F`, from the singular values of `A`.
pub fn pinv_frobenius(a: &DMatrix<f64>) -> Result<f64, BoundError> {
    let sv = a.singular_values();
    let cols = a.ncols();
    let top = sv.max();
    let kept: Vec<f64> = sv.iter().copied().filter(|&s| s > RANK_TOL * top.max(1.0)).collect();
    if kept.len() < cols {
        return Err(BoundError::RankDeficient { rank: kept.len(), cols });
    }
    Ok(kept.iter().map(|s| 1.0 / (s * s)).sum::<f64>().sqrt())
}

/// General-shape constant `sqrt(2) ||(A_O^T)^+||_F` of a body-frame matrix.
pub fn polytope_constant(a_base: &DMatrix<f64>) -> Result<PolytopeConstant, BoundError> {
    Ok(PolytopeConstant {
        c: 2f64.sqrt() * pinv_frobenius(a_base)?,
    })
}

/// `||(A(z)^T)^+||_F` of the placed polytope. Rotation leaves it unchanged,
/// and it equals one for the stacked rectangle `[R^T; -R^T]`.
pub fn direct_constant(base: &Polytope, pose: &Pose2) -> Result<PolytopeConstant, BoundError> {
    let placed = crate::geometry::transform_base_polytope(base, pose)?;
    Ok(PolytopeConstant {
        c: pinv_frobenius(&placed.a)?,
    })
}

pub fn prediction_bound(
    b_i_now: &DVector<f64>,
    b_i_prev: &DVector<f64>,
    b_j_now: &DVector<f64>,
    b_j_prev: &DVector<f64>,
    c_i: f64,
    c_j: f64,
) -> f64 {
    c_i * (b_i_now - b_i_prev).norm() + c_j * (b_j_now - b_j_prev).norm()
}

/// Axis-aligned set of planar poses `(x, y, psi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl StateBox {
    /// Smallest box containing `poses`.
    pub fn covering<'a>(poses: impl IntoIterator<Item = &'a Pose2>) -> Option<StateBox> {
        let mut out: Option<StateBox> = None;
        for p in poses {
            let v = [p.x, p.y, p.psi];
            let b = out.get_or_insert(StateBox { lo: v, hi: v });
            for k in 0..3 {
                b.lo[k] = b.lo[k].min(v[k]);
                b.hi[k] = b.hi[k].max(v[k]);
            }
        }
        out
    }

    fn validate(&self) -> Result<(), BoundError> {
        let ok = (0..3).all(|k| self.lo[k].is_finite() && self.hi[k].is_finite() && self.lo[k] <= self.hi[k]);
        if ok {
            Ok(())
        } else {
            Err(BoundError::UnboundedSet)
        }
    }

    pub fn contains(&self, p: &Pose2) -> bool {
        let v = [p.x, p.y, p.psi];
        (0..3).all(|k| self.lo[k] <= v[k] && v[k] <= self.hi[k])
    }
}

/// Upper bound on `||b(z) - b(z')||` over all pose pairs in `set`.
///
/// `b(z) - b(z') = A_O (R(psi)^T p - R(psi')^T p')`. For fixed headings the
/// norm is convex in the positions, so position corners suffice; headings are
/// gridded and the grid error is covered by the rotation Lipschitz constant.
pub fn max_b_displacement(base: &Polytope, set: &StateBox) -> Result<f64, BoundError> {
    set.validate()?;
    if base.dim() != 2 {
        return Err(BoundError::DimensionMismatch(format!("planar shape expected, got {}", base.dim())));
    }
    let a_norm = base.a.singular_values().max();
    let corners: Vec<Vector2<f64>> = [
        (set.lo[0], set.lo[1]),
        (set.lo[0], set.hi[1]),
        (set.hi[0], set.lo[1]),
        (set.hi[0], set.hi[1]),
    ]
    .iter()
    .map(|&(x, y)| Vector2::new(x, y))
    .collect();
    let p_max = corners.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let span = set.hi[2] - set.lo[2];
    let cells = (span / PSI_GRID_STEP).ceil().max(0.0) as usize;
    let h = if cells == 0 { 0.0 } else { span / cells as f64 };
    let rotated: Vec<Vec<Vector2<f64>>> = (0..=cells)
        .map(|g| {
            let rt = rotation_matrix(set.lo[2] + g as f64 * h).transpose();
            corners.iter().map(|c| rt * c).collect()
        })
        .collect();
    let mut worst: f64 = 0.0;
    for r1 in &rotated {
        for r2 in &rotated {
            for v1 in r1 {
                for v2 in r2 {
                    worst = worst.max((v1 - v2).norm());
                }
            }
        }
    }
    // Each heading is within h/2 of the grid; each rotation moves p by at most |dpsi| |p|.
    Ok(a_norm * (worst + h * p_max))
}

/// Prediction bound evaluated at the largest `b` displacement the two state
/// sets allow.
pub fn trivial_bound(
    base_i: &Polytope,
    set_i: &StateBox,
    base_j: &Polytope,
    set_j: &StateBox,
    c_i: f64,
    c_j: f64,
) -> Result<f64, BoundError> {
    Ok(c_i * max_b_displacement(base_i, set_i)? + c_j * max_b_displacement(base_j, set_j)?)
}

/// Smallest `b` displacement produced by moving `z_prev` by exactly the
/// acceptable errors, over the eight sign combinations.
pub fn alpha_min(z_prev: &Pose2, e_x: f64, e_y: f64, e_psi: f64, base: &Polytope) -> f64 {
    let b_of = |x: f64, y: f64, psi: f64| -> DVector<f64> {
        let rt = rotation_matrix(psi).transpose();
        let q = rt * Vector2::new(x, y);
        &base.a * DVector::from_column_slice(q.as_slice())
    };
    let b0 = b_of(z_prev.x, z_prev.y, z_prev.psi);
    let mut best = f64::INFINITY;
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sp in [-1.0, 1.0] {
                let b = b_of(z_prev.x + sx * e_x, z_prev.y + sy * e_y, z_prev.psi + sp * e_psi);
                best = best.min((b - &b0).norm());
            }
        }
    }
    best
}

/// `||b_now - b_prev|| / alpha`; `None` when `alpha` is zero.
pub fn normalization_ratio(b_now: &DVector<f64>, b_prev: &DVector<f64>, alpha: f64) -> Option<f64> {
    (alpha > 0.0).then(|| (b_now - b_prev).norm() / alpha)
}

/// Acceptable state deviations between rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptableError {
    pub e_x: f64,
    pub e_y: f64,
    pub e_psi: f64,
}

impl Default for AcceptableError {
    fn default() -> Self {
        AcceptableError {
            e_x: 1.0,
            e_y: 0.5,
            e_psi: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTraceRow {
    pub t: usize,
    pub i: usize,
    pub j: usize,
    pub dist_pi: f64,
    pub dist_pj: f64,
    pub true_dist: f64,
    pub e_predict: f64,
    pub bound: f64,
    pub trivial_bound: f64,
    pub alpha_min: f64,
    pub ratio: Option<f64>,
    /// Direct constants used by `bound`.
    pub c_i: f64,
    pub c_j: f64,
    /// General-shape formula constants, reported for comparison.
    pub c_i_formula: f64,
    pub c_j_formula: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorTrace {
    pub rows: Vec<ErrorTraceRow>,
}

impl ErrorTrace {
    /// Builds the trace from the pair data recorded in `log`. The state set
    /// of each robot for the trivial bound is the box covering every pose of
    /// that robot appearing in the trace.
    pub fn from_log(log: &SimulationLog, accept: AcceptableError) -> Result<ErrorTrace, BoundError> {
        let mut poses: Vec<Vec<Pose2>> = vec![Vec::new(); log.robots];
        for d in log.steps.iter().flat_map(|s| &s.pair_trace) {
            poses[d.i].extend([d.pose_i_now, d.pose_i_prev]);
            poses[d.j].extend([d.pose_j_now, d.pose_j_prev]);
        }
        let sets: Vec<Option<StateBox>> = poses.iter().map(StateBox::covering).collect();
        let mut rows = Vec::new();
        for step in &log.steps {
            for d in &step.pair_trace {
                let (Some(set_i), Some(set_j)) = (sets[d.i], sets[d.j]) else {
                    continue;
                };
                rows.push(trace_row(log, step.t, d, &set_i, &set_j, accept)?);
            }
        }
        Ok(ErrorTrace { rows })
    }

    /// Rows where the prediction error exceeds the bound by more than `tol`.
    pub fn bound_violations(&self, tol: f64) -> Vec<&ErrorTraceRow> {
        self.rows.iter().filter(|r| r.e_predict > r.bound + tol).collect()
    }
}

fn trace_row(
    log: &SimulationLog,
    t: usize,
    d: &PairTraceData,
    set_i: &StateBox,
    set_j: &StateBox,
    accept: AcceptableError,
) -> Result<ErrorTraceRow, BoundError> {
    let (base_i, base_j) = (&log.shapes[d.i], &log.shapes[d.j]);
    let dist_pi = dist_predicted_by_i(&d.b_i_now, &d.b_j_prev, &d.lambda_ij, &d.lambda_ji);
    let dist_pj = dist_predicted_by_j(&d.b_i_prev, &d.b_j_now, &d.lambda_ij, &d.lambda_ji);
    let c_i = direct_constant(base_i, &d.pose_i_prev)?.c;
    let c_j = direct_constant(base_j, &d.pose_j_prev)?.c;
    let alpha = alpha_min(&d.pose_i_prev, accept.e_x, accept.e_y, accept.e_psi, base_i);
    Ok(ErrorTraceRow {
        t,
        i: d.i,
        j: d.j,
        dist_pi,
        dist_pj,
        true_dist: d.true_dist,
        e_predict: prediction_error(dist_pi, dist_pj),
        bound: prediction_bound(&d.b_i_now, &d.b_i_prev, &d.b_j_now, &d.b_j_prev, c_i, c_j),
        trivial_bound: trivial_bound(base_i, set_i, base_j, set_j, c_i, c_j)?,
        alpha_min: alpha,
        ratio: normalization_ratio(&d.b_i_now, &d.b_i_prev, alpha),
        c_i,
        c_j,
        c_i_formula: polytope_constant(&base_i.a)?.c,
        c_j_formula: polytope_constant(&base_j.a)?.c,
    })
}
