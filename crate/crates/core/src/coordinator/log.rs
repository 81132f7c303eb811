use nalgebra::DVector;

use crate::dynamics::RobotModel;
use crate::geometry::{oracle_distance, transform_base_polytope, Polytope, Pose2};
use crate::nmpc::NmpcStatus;

#[derive(Debug, Clone, PartialEq)]
pub struct PairTiming {
    pub i: usize,
    pub j: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairDistance {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
}

/// Raw data of one pair at one round for the prediction-error analysis.
///
/// `*_prev` are the predictions the duals were computed from (published in
/// the previous round), `*_now` the polytope of the new plan at `k = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTraceData {
    pub i: usize,
    pub j: usize,
    pub b_i_now: DVector<f64>,
    pub b_i_prev: DVector<f64>,
    pub b_j_now: DVector<f64>,
    pub b_j_prev: DVector<f64>,
    pub lambda_ij: DVector<f64>,
    pub lambda_ji: DVector<f64>,
    pub pose_i_now: Pose2,
    pub pose_i_prev: Pose2,
    pub pose_j_now: Pose2,
    pub pose_j_prev: Pose2,
    /// Distance between the two new `k = 1` predictions.
    pub true_dist: f64,
}

/// One closed-loop round. States are those at the start of the round.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub status: Vec<NmpcStatus>,
    pub fallback: Vec<bool>,
    pub iterations: Vec<usize>,
    pub nmpc_time: Vec<f64>,
    /// Collision-avoidance time per robot (pairs it owns).
    pub ca_time: Vec<f64>,
    pub ca_pairs: Vec<PairTiming>,
    pub pair_distances: Vec<PairDistance>,
    pub min_neighbor_dist: Vec<f64>,
    /// Stage cost of the applied input and the state it leads to.
    pub stage_cost: Vec<f64>,
    pub pair_trace: Vec<PairTraceData>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbortInfo {
    pub robot: usize,
    pub t: usize,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct SimulationLog {
    pub dt: f64,
    pub d_min: f64,
    pub robots: usize,
    /// External robot ids, in log order.
    pub ids: Vec<usize>,
    pub models: Vec<RobotModel>,
    pub shapes: Vec<Polytope>,
    pub steps: Vec<StepRecord>,
    pub final_states: Vec<Vec<f64>>,
    pub abort: Option<AbortInfo>,
    /// Whether the run was distributed (centralized otherwise).
    pub distributed: bool,
}

impl SimulationLog {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Sum of the closed-loop stage costs per robot.
    pub fn closed_loop_costs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.robots];
        for s in &self.steps {
            for (o, c) in out.iter_mut().zip(&s.stage_cost) {
                *o += c;
            }
        }
        out
    }

    pub fn total_cost(&self) -> f64 {
        self.closed_loop_costs().iter().sum()
    }

    /// Mean NMPC solve time per robot.
    pub fn mean_nmpc_time(&self) -> Vec<f64> {
        mean_per_robot(self, |s| &s.nmpc_time)
    }

    /// Mean CA time per robot.
    pub fn mean_ca_time(&self) -> Vec<f64> {
        mean_per_robot(self, |s| &s.ca_time)
    }

    /// Mean over all individual pair solves.
    pub fn mean_ca_pair_time(&self) -> Option<f64> {
        let all: Vec<f64> = self.steps.iter().flat_map(|s| s.ca_pairs.iter().map(|p| p.seconds)).collect();
        (!all.is_empty()).then(|| all.iter().sum::<f64>() / all.len() as f64)
    }
}

fn mean_per_robot(log: &SimulationLog, f: impl Fn(&StepRecord) -> &Vec<f64>) -> Vec<f64> {
    let mut out = vec![0.0; log.robots];
    if log.steps.is_empty() {
        return out;
    }
    for s in &log.steps {
        for (o, v) in out.iter_mut().zip(f(s)) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= log.steps.len() as f64);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyViolation {
    pub t: usize,
    pub i: usize,
    pub j: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyReport {
    pub min_distance: f64,
    pub violations: Vec<SafetyViolation>,
}

impl SafetyReport {
    pub fn is_safe(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-checks every logged configuration (and the final one) with the
/// geometric distance oracle. Pairs closer than `threshold` are reported.
pub fn safety_audit(log: &SimulationLog, threshold: f64) -> SafetyReport {
    let mut min_distance = f64::INFINITY;
    let mut violations = Vec::new();
    let configs = log
        .steps
        .iter()
        .map(|s| (s.t, &s.states))
        .chain(std::iter::once((log.steps.len(), &log.final_states)));
    for (t, states) in configs {
        let polys: Vec<Polytope> = states
            .iter()
            .enumerate()
            .map(|(r, z)| {
                transform_base_polytope(&log.shapes[r], &log.models[r].pose(z)).expect("planar footprint")
            })
            .collect();
        for i in 0..polys.len() {
            for j in i + 1..polys.len() {
                let d = oracle_distance(&polys[i], &polys[j]).expect("planar footprint");
                min_distance = min_distance.min(d);
                if d < threshold {
                    violations.push(SafetyViolation { t, i, j, distance: d });
                }
            }
        }
    }
    SafetyReport {
        min_distance,
        violations,
    }
}
