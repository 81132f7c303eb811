//! Pairwise collision-avoidance solves over a prediction horizon.
//!
//! For a pair `(i, j)` with `i < j` every horizon step gets the dual distance
//! solution of `(P_i, P_j)`, so `s` points from robot `j` towards robot `i`.
//! When predictions overlap, a fallback direction keeps the coupling usable
//! and the step is flagged.

use nalgebra::{DVector, Vector2};

use crate::dual_distance::{
    solve_dual_distance_with, support_multipliers, DualSettings, DualSolution, DualStatus,
};
use crate::dynamics::shift_by;
use crate::geometry::{enumerate_vertices, Polytope};

#[derive(Debug, Clone, PartialEq)]
pub struct DualPairTrajectory {
    pub i: usize,
    pub j: usize,
    /// Solutions for `k = 1..N` (index `k - 1`).
    pub steps: Vec<DualSolution>,
    /// Steps whose separation is below `d_min`.
    pub infeasible: Vec<bool>,
}

impl DualPairTrajectory {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn any_infeasible(&self) -> bool {
        self.infeasible.iter().any(|&b| b)
    }

    /// `(s, l_me, l_other)` per step from robot `me`'s side: `s` points from
    /// the other robot towards `me`.
    #[allow(clippy::type_complexity)]
    pub fn oriented(&self, me: usize) -> (Vec<Vector2<f64>>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let sign = if me == self.i { 1.0 } else { -1.0 };
        let s = self.steps.iter().map(|d| s2(&d.s) * sign).collect();
        let (own, other): (Vec<_>, Vec<_>) = self
            .steps
            .iter()
            .map(|d| {
                if me == self.i {
                    (d.lambda_12.clone(), d.lambda_21.clone())
                } else {
                    (d.lambda_21.clone(), d.lambda_12.clone())
                }
            })
            .unzip();
        (s, own, other)
    }

    /// Reindexes for data that is `extra` steps older than expected.
    pub fn shifted(&self, extra: usize) -> DualPairTrajectory {
        DualPairTrajectory {
            i: self.i,
            j: self.j,
            steps: shift_by(&self.steps, extra),
            infeasible: shift_by(&self.infeasible, extra),
        }
    }
}

fn s2(s: &DVector<f64>) -> Vector2<f64> {
    if s.len() >= 2 {
        Vector2::new(s[0], s[1])
    } else {
        Vector2::zeros()
    }
}

fn centroid(p: &Polytope) -> Option<Vector2<f64>> {
    let v = enumerate_vertices(p).ok()?;
    if v.is_empty() {
        return None;
    }
    Some(v.iter().fold(Vector2::zeros(), |a, b| a + b) / v.len() as f64)
}

/// A signed separation certificate along a chosen unit direction `s`
/// (pointing towards `p_i`), used when the polytopes overlap.
fn directional_solution(p_i: &Polytope, p_j: &Polytope, s: Vector2<f64>, status: DualStatus) -> Option<DualSolution> {
    let (_, l_ij) = support_multipliers(p_i, &s).ok()?;
    let (_, l_ji) = support_multipliers(p_j, &(-s)).ok()?;
    let distance = -p_i.b.dot(&l_ij) - p_j.b.dot(&l_ji);
    let c = centroid(p_i).unwrap_or_else(Vector2::zeros);
    let d = centroid(p_j).unwrap_or_else(Vector2::zeros);
    Some(DualSolution {
        distance,
        lambda_12: l_ij,
        lambda_21: l_ji,
        s: DVector::from_column_slice(&[s.x, s.y]),
        status,
        iterations: 0,
        point_1: DVector::from_column_slice(&[c.x, c.y]),
        point_2: DVector::from_column_slice(&[d.x, d.y]),
    })
}

/// Solves the dual distance problem at every horizon step of a pair.
///
/// `warm` should already be aligned with the new horizon (see
/// [`DualPairTrajectory::shifted`]).
pub fn solve_ca_pair(
    i: usize,
    j: usize,
    polys_i: &[Polytope],
    polys_j: &[Polytope],
    d_min: f64,
    warm: Option<&DualPairTrajectory>,
) -> DualPairTrajectory {
    let settings = DualSettings::default();
    let n = polys_i.len().min(polys_j.len());
    let mut steps = Vec::with_capacity(n);
    let mut infeasible = Vec::with_capacity(n);
    for k in 0..n {
        let w = warm.and_then(|w| w.steps.get(k));
        let sol = solve_dual_distance_with(&polys_i[k], &polys_j[k], &settings, w)
            .expect("robot footprints share a dimension");
        let sol = if sol.status == DualStatus::Optimal {
            sol
        } else {
            fallback(&polys_i[k], &polys_j[k], w, steps.last(), sol)
        };
        infeasible.push(sol.status != DualStatus::Optimal || sol.distance < d_min);
        steps.push(sol);
    }
    DualPairTrajectory { i, j, steps, infeasible }
}

fn fallback(
    p_i: &Polytope,
    p_j: &Polytope,
    warm: Option<&DualSolution>,
    previous_step: Option<&DualSolution>,
    sol: DualSolution,
) -> DualSolution {
    let candidates = [warm.map(|w| s2(&w.s)), previous_step.map(|p| s2(&p.s))];
    let mut dir = candidates.into_iter().flatten().find(|s| s.norm() > 0.5);
    if dir.is_none() {
        if let (Some(ci), Some(cj)) = (centroid(p_i), centroid(p_j)) {
            let d = ci - cj;
            if d.norm() > 1e-12 {
                dir = Some(d);
            }
        }
    }
    let dir = dir.unwrap_or_else(|| Vector2::new(1.0, 0.0));
    directional_solution(p_i, p_j, dir / dir.norm(), sol.status).unwrap_or(sol)
}

/// Duals for every pair from given polytope predictions (index = robot).
pub fn initialize_duals(
    pairs: &[(usize, usize)],
    predictions: &[Vec<Polytope>],
    d_min: f64,
) -> Vec<DualPairTrajectory> {
    pairs
        .iter()
        .map(|&(i, j)| solve_ca_pair(i, j, &predictions[i], &predictions[j], d_min, None))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{vehicle_polytope, Pose2};
    use approx::assert_relative_eq;

    fn cars(dx: f64, n: usize) -> (Vec<Polytope>, Vec<Polytope>) {
        let a = (0..n).map(|k| vehicle_polytope(&Pose2::new(k as f64, 0.0, 0.0), 4.5, 1.8)).collect();
        let b = (0..n).map(|k| vehicle_polytope(&Pose2::new(k as f64 + dx, 0.0, 0.0), 4.5, 1.8)).collect();
        (a, b)
    }

    #[test]
    fn separated_pair_is_feasible() {
        let (a, b) = cars(10.0, 15);
        let t = solve_ca_pair(0, 1, &a, &b, 0.5, None);
        assert_eq!(t.steps.len(), 15);
        assert!(!t.any_infeasible());
        for d in &t.steps {
            assert_relative_eq!(d.distance, 5.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn too_close_is_flagged_not_fatal() {
        let (a, b) = cars(4.8, 3);
        let t = solve_ca_pair(0, 1, &a, &b, 0.5, None);
        assert!(t.infeasible.iter().all(|&f| f));
        assert_relative_eq!(t.steps[0].distance, 0.3, epsilon = 1e-9);
    }

    #[test]
    fn overlap_gets_signed_direction() {
        let (a, b) = cars(4.0, 2);
        let t = solve_ca_pair(0, 1, &a, &b, 0.5, None);
        assert!(t.any_infeasible());
        let d = &t.steps[0];
        assert_eq!(d.status, DualStatus::Intersecting);
        assert_relative_eq!(d.s.norm(), 1.0, epsilon = 1e-12);
        // Robot j is ahead, so s points backwards and the overlap is 0.5 m.
        assert!(d.s[0] < 0.0);
        assert_relative_eq!(d.distance, -0.5, epsilon = 1e-9);
    }

    #[test]
    fn orientation_swaps_roles() {
        let (a, b) = cars(10.0, 2);
        let t = solve_ca_pair(0, 1, &a, &b, 0.5, None);
        let (s0, l0, _) = t.oriented(0);
        let (s1, l1, o1) = t.oriented(1);
        assert_relative_eq!(s0[0], -s1[0]);
        assert_eq!(l0[0], o1[0]);
        assert_eq!(l1[0], t.steps[0].lambda_21);
    }

    #[test]
    fn warm_start_matches_cold() {
        let (a, b) = cars(7.0, 5);
        let cold = solve_ca_pair(0, 1, &a, &b, 0.5, None);
        let (a2, b2) = cars(7.1, 5);
        let warm = solve_ca_pair(0, 1, &a2, &b2, 0.5, Some(&cold));
        let cold2 = solve_ca_pair(0, 1, &a2, &b2, 0.5, None);
        for (w, c) in warm.steps.iter().zip(&cold2.steps) {
            assert_relative_eq!(w.distance, c.distance, epsilon = 1e-9);
        }
    }
}
