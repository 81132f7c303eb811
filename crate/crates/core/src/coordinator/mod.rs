//! Closed-loop simulation of a robot team.
//!
//! A distributed round follows the bi-level scheme: every robot solves its
//! local problem with the pair duals and neighbour predictions of the
//! previous round, publishes its shifted predicted polytopes, and the lower
//! index of every pair then recomputes the pair duals from the fresh
//! predictions. Only the first planned input is applied. Local solves and
//! pair solves run in parallel; results are collected in robot and pair order
//! so runs are deterministic.
//!
//! The centralized baseline solves one joint problem per round.

mod bus;
mod log;

pub use bus::{staleness, BusError, DualMessage, MessageBus, PolytopeMessage};
pub use log::{
    safety_audit, AbortInfo, PairDistance, PairTiming, PairTraceData, SafetyReport, SafetyViolation, SimulationLog,
    StepRecord,
};

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ca_solver::{solve_ca_pair, DualPairTrajectory};
use crate::dynamics::rollout;
use crate::error::{NmpcError, RunError};
use crate::geometry::{oracle_distance, transform_base_polytope, Polytope, Pose2};
use crate::nmpc::{
    shift_inputs, solve_centralized_nmpc, solve_local_nmpc, stage_cost, CentralizedProblem, CouplingKind,
    CouplingMode, LocalNmpcProblem, NeighborCoupling, NmpcSettings, NmpcSolution, NmpcStatus, RobotSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Distributed,
    Centralized,
}

impl RunMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunMode::Distributed => "distributed",
            RunMode::Centralized => "centralized",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinatorSettings {
    pub nmpc: NmpcSettings,
    pub d_min: f64,
    pub coupling: CouplingMode,
    /// Communication radius between robot centres; `None` connects everyone.
    pub comm_radius: Option<f64>,
    /// Rounds by which bus messages are held back.
    pub delay: usize,
    pub parallel: bool,
    /// A run stops once a robot has been infeasible for more rounds in a row.
    pub max_infeasible_streak: usize,
    /// Record the per-pair data needed for the prediction-error analysis.
    pub trace: bool,
}

impl Default for CoordinatorSettings {
    fn default() -> Self {
        CoordinatorSettings {
            nmpc: NmpcSettings::default(),
            d_min: 0.5,
            coupling: CouplingMode::default(),
            comm_radius: None,
            delay: 0,
            parallel: true,
            max_infeasible_streak: 5,
            trace: false,
        }
    }
}

/// Planned inputs `u_0..u_{N-1}` and states `z_0..z_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub inputs: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RobotAgent {
    pub id: usize,
    pub spec: RobotSpec,
    pub state: Vec<f64>,
    /// Last applied input.
    pub u_prev: Vec<f64>,
    pub plan: Plan,
    pub last_status: Option<NmpcStatus>,
    pub neighbors: BTreeSet<usize>,
    infeasible_streak: usize,
    /// Duals against each static obstacle, computed by the robot itself.
    obstacle_duals: Vec<DualMessage>,
}

impl RobotAgent {
    fn polytope(&self, z: &[f64]) -> Polytope {
        transform_base_polytope(&self.spec.shape, &self.spec.model.pose(z)).expect("planar footprint")
    }

    /// Polytopes and poses of `z(2..N), z(N)` of the current plan, i.e. the
    /// predictions for `k = 1..N` of the next round.
    fn shifted_predictions(&self) -> (Vec<Polytope>, Vec<Pose2>) {
        let n = self.plan.states.len() - 1;
        (1..=n)
            .map(|k| {
                let z = &self.plan.states[(k + 1).min(n)];
                (self.polytope(z), self.spec.model.pose(z))
            })
            .unzip()
    }
}

/// Symmetric neighbour sets: `j` is a neighbour of `i` iff their centres are
/// at most `radius` apart (`None` is unlimited).
pub fn neighbor_sets(positions: &[Vector2<f64>], radius: Option<f64>) -> Vec<BTreeSet<usize>> {
    let m = positions.len();
    let mut out = vec![BTreeSet::new(); m];
    for i in 0..m {
        for j in i + 1..m {
            if radius.is_none_or(|r| (positions[i] - positions[j]).norm() <= r) {
                out[i].insert(j);
                out[j].insert(i);
            }
        }
    }
    out
}

fn pairs_of(neighbors: &[BTreeSet<usize>]) -> BTreeSet<(usize, usize)> {
    neighbors
        .iter()
        .enumerate()
        .flat_map(|(i, set)| set.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
        .collect()
}

fn map_items<T: Sync, R: Send>(items: &[T], parallel: bool, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

/// Shifted previous inputs with a zero final input, rolled out from the
/// current state.
fn fallback_plan(agent: &RobotAgent, dt: f64) -> Plan {
    let mut inputs = shift_inputs(&agent.plan.inputs);
    if let Some(last) = inputs.last_mut() {
        last.iter_mut().for_each(|u| *u = 0.0);
    }
    let states = rollout(&agent.spec.model, &agent.state, &inputs, dt).expect("validated dimensions");
    Plan { inputs, states }
}

pub struct World {
    pub agents: Vec<RobotAgent>,
    pub obstacles: Vec<Polytope>,
    pub settings: CoordinatorSettings,
    bus: MessageBus,
    t: usize,
    active_pairs: BTreeSet<(usize, usize)>,
    central_duals: BTreeMap<(usize, usize), DualPairTrajectory>,
}

struct RoundOutcome {
    plans: Vec<Plan>,
    status: Vec<NmpcStatus>,
    fallback: Vec<bool>,
    iterations: Vec<usize>,
    nmpc_time: Vec<f64>,
    ca_time: Vec<f64>,
    ca_pairs: Vec<PairTiming>,
    pair_trace: Vec<PairTraceData>,
}

impl World {
    /// Robots start with `inputs[i]` as their last applied input and assume
    /// it is held over the first horizon.
    pub fn new(
        specs: Vec<RobotSpec>,
        states: Vec<Vec<f64>>,
        inputs: Vec<Vec<f64>>,
        obstacles: Vec<Polytope>,
        settings: CoordinatorSettings,
    ) -> Result<World, RunError> {
        settings.nmpc.validate()?;
        if specs.len() != states.len() || specs.len() != inputs.len() {
            return Err(NmpcError::Invalid("one initial state and input per robot".into()).into());
        }
        if !(settings.d_min >= 0.0) {
            return Err(NmpcError::Invalid("d_min must be nonnegative".into()).into());
        }
        let n = settings.nmpc.horizon;
        let dt = settings.nmpc.dt;
        let mut bus = MessageBus::new(specs.len(), settings.delay);
        let mut agents = Vec::with_capacity(specs.len());
        for (id, ((spec, z0), u0)) in specs.into_iter().zip(states).zip(inputs).enumerate() {
            spec.model.check(&z0, &u0).map_err(NmpcError::from)?;
            let plan_inputs = vec![u0.clone(); n];
            let plan_states = rollout(&spec.model, &z0, &plan_inputs, dt).map_err(NmpcError::from)?;
            let mut agent = RobotAgent {
                id,
                spec,
                state: z0,
                u_prev: u0,
                plan: Plan {
                    inputs: plan_inputs,
                    states: plan_states,
                },
                last_status: None,
                neighbors: BTreeSet::new(),
                infeasible_streak: 0,
                obstacle_duals: Vec::new(),
            };
            // The initial guess plays the role of a plan made one round earlier.
            let (polytopes, poses): (Vec<_>, Vec<_>) = (1..=n)
                .map(|k| {
                    let z = &agent.plan.states[k];
                    (agent.polytope(z), agent.spec.model.pose(z))
                })
                .unzip();
            agent.obstacle_duals = obstacle_messages(id, &polytopes, &poses, &obstacles, settings.d_min, None, -1);
            bus.publish_polytopes(
                id,
                PolytopeMessage {
                    stamp: -1,
                    polytopes,
                    poses,
                },
            )
            .map_err(|e| RunError::Bus(e.to_string()))?;
            agents.push(agent);
        }
        Ok(World {
            agents,
            obstacles,
            settings,
            bus,
            t: 0,
            active_pairs: BTreeSet::new(),
            central_duals: BTreeMap::new(),
        })
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn bus(&self) -> &MessageBus {
        &self.bus
    }

    fn update_neighbors(&mut self) -> BTreeSet<(usize, usize)> {
        let positions: Vec<Vector2<f64>> = self
            .agents
            .iter()
            .map(|a| a.spec.model.pose(&a.state).position())
            .collect();
        let sets = neighbor_sets(&positions, self.settings.comm_radius);
        for (a, s) in self.agents.iter_mut().zip(&sets) {
            a.neighbors = s.clone();
        }
        pairs_of(&sets)
    }

    /// Starts or stops pair couplings when the neighbour graph changes.
    fn sync_pairs(&mut self, pairs: BTreeSet<(usize, usize)>) -> Result<(), RunError> {
        let t = self.t as i64;
        for &p in self.active_pairs.difference(&pairs) {
            self.bus.drop_pair(p);
        }
        for &(i, j) in pairs.difference(&self.active_pairs) {
            let (Some(mi), Some(mj)) = (self.bus.read_polytopes(i, t), self.bus.read_polytopes(j, t)) else {
                return Err(RunError::Bus(format!("no predictions for pair ({i}, {j})")));
            };
            let (mi, mj) = (mi.aligned(t), mj.aligned(t));
            let duals = solve_ca_pair(i, j, &mi.polytopes, &mj.polytopes, self.settings.d_min, None);
            let msg = DualMessage {
                stamp: t - 1,
                duals,
                polytopes_i: mi.polytopes,
                polytopes_j: mj.polytopes,
                poses_i: mi.poses,
                poses_j: mj.poses,
            };
            self.bus
                .publish_duals((i, j), msg)
                .map_err(|e| RunError::Bus(e.to_string()))?;
        }
        self.active_pairs = pairs;
        Ok(())
    }

    fn couplings_for(&self, agent: &RobotAgent, msgs: &BTreeMap<(usize, usize), DualMessage>) -> Vec<NeighborCoupling> {
        let mut out = Vec::new();
        for &j in &agent.neighbors {
            let pair = (agent.id.min(j), agent.id.max(j));
            let Some(msg) = msgs.get(&pair) else { continue };
            out.push(NeighborCoupling::from_pair(
                agent.id,
                &msg.duals,
                &msg.polytopes_i,
                &msg.polytopes_j,
            ));
        }
        for (o, msg) in agent.obstacle_duals.iter().enumerate() {
            let msg = msg.aligned(self.t as i64);
            let (s, lambda_own, lambda_neighbor) = msg.duals.oriented(agent.id);
            out.push(NeighborCoupling {
                kind: CouplingKind::Obstacle(o),
                s,
                lambda_own,
                lambda_neighbor,
                neighbor_polytopes: msg.polytopes_j,
                own_polytopes: msg.polytopes_i,
            });
        }
        out
    }

    fn distributed_round(&mut self) -> Result<RoundOutcome, RunError> {
        let pairs = self.update_neighbors();
        self.sync_pairs(pairs)?;
        let t = self.t as i64;
        let st = self.settings.clone();
        let n = st.nmpc.horizon;

        let mut msgs = BTreeMap::new();
        for &p in &self.active_pairs {
            if let Some(m) = self.bus.read_duals(p, t) {
                msgs.insert(p, m.clone());
            }
        }
        let too_stale: BTreeSet<(usize, usize)> = msgs
            .iter()
            .filter(|(_, m)| staleness(m.stamp, t) > n)
            .map(|(p, _)| *p)
            .collect();
        let aligned: BTreeMap<(usize, usize), DualMessage> = msgs.iter().map(|(p, m)| (*p, m.aligned(t))).collect();

        // Local problems, solved in parallel.
        let problems: Vec<Option<LocalNmpcProblem>> = self
            .agents
            .iter()
            .map(|a| {
                let stale = a
                    .neighbors
                    .iter()
                    .any(|&j| too_stale.contains(&(a.id.min(j), a.id.max(j))));
                (!stale).then(|| LocalNmpcProblem {
                    robot: &a.spec,
                    z0: a.state.clone(),
                    u_prev: a.u_prev.clone(),
                    warm_start: Some(shift_inputs(&a.plan.inputs)),
                    couplings: self.couplings_for(a, &aligned),
                    d_min: st.d_min,
                    mode: st.coupling,
                    settings: st.nmpc,
                })
            })
            .collect();
        let solved: Vec<Option<Result<NmpcSolution, NmpcError>>> =
            map_items(&problems, st.parallel, |p| p.as_ref().map(solve_local_nmpc));
        drop(problems);

        let m = self.agents.len();
        let mut plans = Vec::with_capacity(m);
        let mut status = Vec::with_capacity(m);
        let mut fallback = Vec::with_capacity(m);
        let mut iterations = Vec::with_capacity(m);
        let mut nmpc_time = Vec::with_capacity(m);
        for (agent, res) in self.agents.iter().zip(solved) {
            match res {
                Some(Ok(sol)) => {
                    let use_fallback = sol.status == NmpcStatus::Infeasible;
                    status.push(sol.status);
                    iterations.push(sol.iterations);
                    nmpc_time.push(sol.solve_time.as_secs_f64());
                    fallback.push(use_fallback);
                    plans.push(if use_fallback {
                        self.fallback_for(agent)
                    } else {
                        Plan {
                            inputs: sol.inputs,
                            states: sol.states,
                        }
                    });
                }
                Some(Err(e)) => return Err(e.into()),
                None => {
                    status.push(NmpcStatus::Infeasible);
                    iterations.push(0);
                    nmpc_time.push(0.0);
                    fallback.push(true);
                    plans.push(self.fallback_for(agent));
                }
            }
        }
        for (a, p) in self.agents.iter_mut().zip(&plans) {
            a.plan = p.clone();
        }

        // Publish shifted predictions.
        let published: Vec<(Vec<Polytope>, Vec<Pose2>)> = self.agents.iter().map(|a| a.shifted_predictions()).collect();
        for (i, (polytopes, poses)) in published.iter().enumerate() {
            self.bus
                .publish_polytopes(
                    i,
                    PolytopeMessage {
                        stamp: t,
                        polytopes: polytopes.clone(),
                        poses: poses.clone(),
                    },
                )
                .map_err(|e| RunError::Bus(e.to_string()))?;
        }

        // Pair duals for the next round, computed by the lower index.
        struct PairJob {
            pair: (usize, usize),
            own: (Vec<Polytope>, Vec<Pose2>),
            other: PolytopeMessage,
            warm: Option<DualPairTrajectory>,
        }
        let jobs: Vec<PairJob> = self
            .active_pairs
            .iter()
            .map(|&(i, j)| {
                let other = self
                    .bus
                    .read_polytopes(j, t + 1)
                    .expect("seeded at construction")
                    .aligned(t + 1);
                let warm = self.bus.latest_duals((i, j)).map(|m| m.aligned(t + 1).duals);
                PairJob {
                    pair: (i, j),
                    own: published[i].clone(),
                    other,
                    warm,
                }
            })
            .collect();
        let d_min = st.d_min;
        let pair_results: Vec<(DualMessage, f64)> = map_items(&jobs, st.parallel, |job| {
            let start = Instant::now();
            let duals = solve_ca_pair(
                job.pair.0,
                job.pair.1,
                &job.own.0,
                &job.other.polytopes,
                d_min,
                job.warm.as_ref(),
            );
            let secs = start.elapsed().as_secs_f64();
            (
                DualMessage {
                    stamp: t,
                    duals,
                    polytopes_i: job.own.0.clone(),
                    polytopes_j: job.other.polytopes.clone(),
                    poses_i: job.own.1.clone(),
                    poses_j: job.other.poses.clone(),
                },
                secs,
            )
        });
        let mut ca_time = vec![0.0; m];
        let mut ca_pairs = Vec::with_capacity(pair_results.len());
        for (job, (msg, secs)) in jobs.iter().zip(pair_results) {
            ca_time[job.pair.0] += secs;
            ca_pairs.push(PairTiming {
                i: job.pair.0,
                j: job.pair.1,
                seconds: secs,
            });
            self.bus
                .publish_duals(job.pair, msg)
                .map_err(|e| RunError::Bus(e.to_string()))?;
        }
        if !self.obstacles.is_empty() {
            for (i, (polytopes, poses)) in published.iter().enumerate() {
                let start = Instant::now();
                let warm: Vec<DualPairTrajectory> = self.agents[i]
                    .obstacle_duals
                    .iter()
                    .map(|m| m.aligned(t + 1).duals)
                    .collect();
                self.agents[i].obstacle_duals =
                    obstacle_messages(i, polytopes, poses, &self.obstacles, d_min, Some(&warm), t);
                ca_time[i] += start.elapsed().as_secs_f64();
            }
        }

        let pair_trace = if st.trace {
            aligned
                .iter()
                .map(|(&(i, j), msg)| {
                    let pi = self.agents[i].polytope(&plans[i].states[1]);
                    let pj = self.agents[j].polytope(&plans[j].states[1]);
                    let d = &msg.duals.steps[0];
                    PairTraceData {
                        i,
                        j,
                        b_i_now: pi.b.clone(),
                        b_i_prev: msg.polytopes_i[0].b.clone(),
                        b_j_now: pj.b.clone(),
                        b_j_prev: msg.polytopes_j[0].b.clone(),
                        lambda_ij: d.lambda_12.clone(),
                        lambda_ji: d.lambda_21.clone(),
                        pose_i_now: self.agents[i].spec.model.pose(&plans[i].states[1]),
                        pose_i_prev: msg.poses_i[0],
                        pose_j_now: self.agents[j].spec.model.pose(&plans[j].states[1]),
                        pose_j_prev: msg.poses_j[0],
                        true_dist: oracle_distance(&pi, &pj).expect("planar footprint"),
                    }
                })
                .collect()
        } else {
            Vec::new()
        };

        Ok(RoundOutcome {
            plans,
            status,
            fallback,
            iterations,
            nmpc_time,
            ca_time,
            ca_pairs,
            pair_trace,
        })
    }

    fn fallback_for(&self, agent: &RobotAgent) -> Plan {
        fallback_plan(agent, self.settings.nmpc.dt)
    }

    fn centralized_round(&mut self) -> Result<RoundOutcome, RunError> {
        let pairs: Vec<(usize, usize)> = self.update_neighbors().into_iter().collect();
        self.central_duals.retain(|p, _| pairs.contains(p));
        let st = self.settings.clone();
        let warm_duals = pairs
            .iter()
            .all(|p| self.central_duals.contains_key(p))
            .then(|| pairs.iter().map(|p| self.central_duals[p].shifted(1)).collect());
        let problem = CentralizedProblem {
            robots: self.agents.iter().map(|a| &a.spec).collect(),
            z0: self.agents.iter().map(|a| a.state.clone()).collect(),
            u_prev: self.agents.iter().map(|a| a.u_prev.clone()).collect(),
            warm_start: Some(self.agents.iter().map(|a| shift_inputs(&a.plan.inputs)).collect()),
            pairs: pairs.clone(),
            obstacles: self.obstacles.clone(),
            d_min: st.d_min,
            settings: st.nmpc,
            warm_duals,
        };
        let sol = solve_centralized_nmpc(&problem)?;
        let m = self.agents.len();
        let failed = sol.status == NmpcStatus::Infeasible;
        let plans: Vec<Plan> = if failed {
            self.agents.iter().map(|a| self.fallback_for(a)).collect()
        } else {
            sol.robots
                .iter()
                .map(|r| Plan {
                    inputs: r.inputs.clone(),
                    states: r.states.clone(),
                })
                .collect()
        };
        for (a, p) in self.agents.iter_mut().zip(&plans) {
            a.plan = p.clone();
        }
        let pair_trace = if st.trace {
            pairs
                .iter()
                .zip(&sol.duals)
                .map(|(&(i, j), duals)| {
                    let pi = self.agents[i].polytope(&plans[i].states[1]);
                    let pj = self.agents[j].polytope(&plans[j].states[1]);
                    let d = &duals.steps[0];
                    let pose_i = self.agents[i].spec.model.pose(&plans[i].states[1]);
                    let pose_j = self.agents[j].spec.model.pose(&plans[j].states[1]);
                    // A joint solve has no stale predictions.
                    PairTraceData {
                        i,
                        j,
                        b_i_now: pi.b.clone(),
                        b_i_prev: pi.b.clone(),
                        b_j_now: pj.b.clone(),
                        b_j_prev: pj.b.clone(),
                        lambda_ij: d.lambda_12.clone(),
                        lambda_ji: d.lambda_21.clone(),
                        pose_i_now: pose_i,
                        pose_i_prev: pose_i,
                        pose_j_now: pose_j,
                        pose_j_prev: pose_j,
                        true_dist: oracle_distance(&pi, &pj).expect("planar footprint"),
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        self.central_duals = pairs.iter().copied().zip(sol.duals).collect();
        let secs = sol.solve_time.as_secs_f64();
        Ok(RoundOutcome {
            plans,
            status: vec![sol.status; m],
            fallback: vec![failed; m],
            iterations: vec![sol.iterations; m],
            nmpc_time: vec![secs; m],
            ca_time: vec![0.0; m],
            ca_pairs: Vec::new(),
            pair_trace,
        })
    }

    /// Runs one round in the given mode, applies the first planned inputs and
    /// returns the record of the round.
    pub fn step(&mut self, mode: RunMode) -> Result<StepRecord, RunError> {
        let out = match mode {
            RunMode::Distributed => self.distributed_round()?,
            RunMode::Centralized => self.centralized_round()?,
        };
        let dt = self.settings.nmpc.dt;
        let states: Vec<Vec<f64>> = self.agents.iter().map(|a| a.state.clone()).collect();
        let (pair_distances, min_neighbor_dist) = distances(&self.agents);
        let mut inputs = Vec::with_capacity(self.agents.len());
        let mut costs = Vec::with_capacity(self.agents.len());
        for ((a, plan), status) in self.agents.iter_mut().zip(&out.plans).zip(&out.status) {
            let u = plan.inputs[0].clone();
            let next = a.spec.model.step(&a.state, &u, dt).map_err(NmpcError::from)?;
            let z_ref = a.spec.reference.at(0, &next, dt);
            costs.push(stage_cost(&next, &z_ref, &u, &a.u_prev, &a.spec.weights));
            a.state = next;
            a.u_prev = u.clone();
            a.last_status = Some(*status);
            if *status == NmpcStatus::Infeasible {
                a.infeasible_streak += 1;
            } else {
                a.infeasible_streak = 0;
            }
            inputs.push(u);
        }
        let record = StepRecord {
            t: self.t,
            states,
            inputs,
            status: out.status,
            fallback: out.fallback,
            iterations: out.iterations,
            nmpc_time: out.nmpc_time,
            ca_time: out.ca_time,
            ca_pairs: out.ca_pairs,
            pair_distances,
            min_neighbor_dist,
            stage_cost: costs,
            pair_trace: out.pair_trace,
        };
        self.t += 1;
        Ok(record)
    }

    /// The robot with the longest run of infeasible rounds beyond the
    /// allowed streak, if any.
    pub fn exceeded_streak(&self) -> Option<AbortInfo> {
        self.agents
            .iter()
            .filter(|a| a.infeasible_streak > self.settings.max_infeasible_streak)
            .max_by_key(|a| a.infeasible_streak)
            .map(|a| AbortInfo {
                robot: a.id,
                t: self.t.saturating_sub(1),
                count: a.infeasible_streak,
            })
    }

    fn empty_log(&self, mode: RunMode) -> SimulationLog {
        SimulationLog {
            dt: self.settings.nmpc.dt,
            d_min: self.settings.d_min,
            robots: self.agents.len(),
            ids: (0..self.agents.len()).collect(),
            models: self.agents.iter().map(|a| a.spec.model).collect(),
            shapes: self.agents.iter().map(|a| a.spec.shape.clone()).collect(),
            steps: Vec::new(),
            final_states: self.agents.iter().map(|a| a.state.clone()).collect(),
            abort: None,
            distributed: mode == RunMode::Distributed,
        }
    }
}

fn obstacle_messages(
    robot: usize,
    polytopes: &[Polytope],
    poses: &[Pose2],
    obstacles: &[Polytope],
    d_min: f64,
    warm: Option<&[DualPairTrajectory]>,
    stamp: i64,
) -> Vec<DualMessage> {
    obstacles
        .iter()
        .enumerate()
        .map(|(o, obs)| {
            let fixed = vec![obs.clone(); polytopes.len()];
            let w = warm.and_then(|w| w.get(o));
            DualMessage {
                stamp,
                duals: solve_ca_pair(robot, o, polytopes, &fixed, d_min, w),
                polytopes_i: polytopes.to_vec(),
                polytopes_j: fixed,
                poses_i: poses.to_vec(),
                poses_j: vec![Pose2::new(0.0, 0.0, 0.0); polytopes.len()],
            }
        })
        .collect()
}

/// Oracle distances of all pairs and each robot's distance to its nearest
/// other robot (infinite when alone).
fn distances(agents: &[RobotAgent]) -> (Vec<PairDistance>, Vec<f64>) {
    let polys: Vec<Polytope> = agents.iter().map(|a| a.polytope(&a.state)).collect();
    let mut pairs = Vec::new();
    let mut nearest = vec![f64::INFINITY; agents.len()];
    for i in 0..polys.len() {
        for j in i + 1..polys.len() {
            let d = oracle_distance(&polys[i], &polys[j]).expect("planar footprint");
            nearest[i] = nearest[i].min(d);
            nearest[j] = nearest[j].min(d);
            pairs.push(PairDistance { i, j, distance: d });
        }
    }
    (pairs, nearest)
}

/// Runs `steps` rounds. A run that exceeds the allowed infeasible streak
/// stops early and the log records why.
pub fn run(world: &mut World, steps: usize, mode: RunMode) -> Result<SimulationLog, RunError> {
    let mut log = world.empty_log(mode);
    for _ in 0..steps {
        let rec = world.step(mode)?;
        log.steps.push(rec);
        if let Some(abort) = world.exceeded_streak() {
            log.abort = Some(abort);
            break;
        }
    }
    log.final_states = world.agents.iter().map(|a| a.state.clone()).collect();
    Ok(log)
}

#[cfg(test)]
mod tests;
