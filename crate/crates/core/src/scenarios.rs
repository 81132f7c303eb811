//! Scenario files and the built-in experiments.
//!
//! Scenarios are TOML documents with a `schema_version` key. Example:
//!
//! ```toml
//! schema_version = 1
//! name = "pair"
//! mode = "distributed"
//! steps = 100
//! dt = 0.05
//! horizon = 15
//! d_min = 0.5
//!
//! [[robots]]
//! id = 0
//! model = { kind = "unicycle" }
//! shape = { kind = "rectangle", length = 1.0, width = 1.0 }
//! initial_state = [0.0, 0.0, 0.0]
//! initial_input = [0.0, 0.0]
//! reference = { kind = "goal", state = [5.0, 0.0, 0.0] }
//! weights = { q_z = [1.0, 1.0, 0.1], q_u = [0.1, 0.1], q_du = [0.1, 0.1] }
//! bounds = { u_min = [-1.0, -1.0], u_max = [1.0, 1.0], rate_max = [2.0, 2.0] }
//! ```

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::coordinator::{run, CoordinatorSettings, RunMode, SimulationLog, World};
use crate::dynamics::{wrap_angle, RobotModel, VehicleParams};
use crate::error::{ConfigError, RunError};
use crate::geometry::{enumerate_vertices, rectangle_base, Polytope};
use crate::nmpc::{CostWeights, CouplingMode, InputBounds, NmpcSettings, Reference, RobotSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Lane centres of the three-lane road, from the bottom.
pub const LANES: [f64; 3] = [1.85, 5.55, 9.25];
pub const LANE_WIDTH: f64 = 3.7;
pub const VEHICLE_LENGTH: f64 = 4.5;
pub const VEHICLE_WIDTH: f64 = 1.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeConfig {
    /// Axis-aligned rectangle centred on the body origin, `length` along the
    /// heading.
    Rectangle { length: f64, width: f64 },
    /// Counter-clockwise body-frame vertices; the origin must be interior.
    Polygon { vertices: Vec<[f64; 2]> },
}

impl ShapeConfig {
    pub fn polytope(&self) -> Result<Polytope, String> {
        match self {
            ShapeConfig::Rectangle { length, width } => {
                if !(*length > 0.0 && *width > 0.0) {
                    return Err("dimensions must be positive".into());
                }
                Ok(rectangle_base(*length, *width))
            }
            ShapeConfig::Polygon { vertices } => {
                let v: Vec<Vector2<f64>> = vertices.iter().map(|p| Vector2::new(p[0], p[1])).collect();
                let p = Polytope::from_ccw_vertices(&v).map_err(|e| e.to_string())?;
                if p.b.iter().any(|&b| b <= 0.0) {
                    return Err("origin must lie strictly inside the polygon".into());
                }
                Ok(p)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsConfig {
    pub q_z: Vec<f64>,
    pub q_u: Vec<f64>,
    pub q_du: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotConfig {
    pub id: usize,
    pub model: RobotModel,
    pub shape: ShapeConfig,
    pub initial_state: Vec<f64>,
    pub initial_input: Vec<f64>,
    pub reference: Reference,
    pub weights: WeightsConfig,
    pub bounds: InputBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleConfig {
    pub vertices: Vec<[f64; 2]>,
}

/// Solver options; omitted keys take their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub step_tol: f64,
    pub violation_tol: f64,
    pub penalty_init: f64,
    pub penalty_max: f64,
    pub prune_margin: f64,
    pub vertex_margin: f64,
    pub coupling: CouplingMode,
    pub parallel: bool,
    pub max_infeasible_streak: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let n = NmpcSettings::default();
        SolverConfig {
            max_iter: n.max_iter,
            step_tol: n.step_tol,
            violation_tol: n.violation_tol,
            penalty_init: n.penalty_init,
            penalty_max: n.penalty_max,
            prune_margin: n.prune_margin,
            vertex_margin: n.vertex_margin,
            coupling: CouplingMode::default(),
            parallel: true,
            max_infeasible_streak: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub mode: RunMode,
    pub steps: usize,
    pub dt: f64,
    pub horizon: usize,
    pub d_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm_radius: Option<f64>,
    #[serde(default)]
    pub delay: usize,
    #[serde(default)]
    pub trace_error_bound: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    pub robots: Vec<RobotConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub obstacles: Vec<ObstacleConfig>,
}

const REQUIRED: [&str; 8] = ["schema_version", "name", "mode", "steps", "dt", "horizon", "d_min", "robots"];

impl ScenarioConfig {
    pub fn nmpc_settings(&self) -> NmpcSettings {
        let s = &self.solver;
        NmpcSettings {
            horizon: self.horizon,
            dt: self.dt,
            max_iter: s.max_iter,
            step_tol: s.step_tol,
            violation_tol: s.violation_tol,
            penalty_init: s.penalty_init,
            penalty_max: s.penalty_max,
            prune_margin: s.prune_margin,
            vertex_margin: s.vertex_margin,
        }
    }

    pub fn coordinator_settings(&self) -> CoordinatorSettings {
        CoordinatorSettings {
            nmpc: self.nmpc_settings(),
            d_min: self.d_min,
            coupling: self.solver.coupling,
            comm_radius: self.comm_radius,
            delay: self.delay,
            parallel: self.solver.parallel,
            max_infeasible_streak: self.solver.max_infeasible_streak,
            trace: self.trace_error_bound,
        }
    }

    /// Checks every field and reports the first problem with its path.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        if self.horizon < 1 {
            return Err(ConfigError::field("horizon", "must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConfigError::field("dt", "must be positive"));
        }
        if !(self.d_min >= 0.0 && self.d_min.is_finite()) {
            return Err(ConfigError::field("d_min", "must be nonnegative"));
        }
        if let Some(r) = self.comm_radius {
            if !(r > 0.0) {
                return Err(ConfigError::field("comm_radius", "must be positive"));
            }
        }
        if self.robots.is_empty() {
            return Err(ConfigError::field("robots", "at least one robot is required"));
        }
        let mut ids = BTreeSet::new();
        for (k, r) in self.robots.iter().enumerate() {
            let path = |f: &str| format!("robots[{k}].{f}");
            if !ids.insert(r.id) {
                return Err(ConfigError::field(path("id"), format!("duplicate id {}", r.id)));
            }
            r.model.validate().map_err(|e| ConfigError::field(path("model"), e.to_string()))?;
            let (nx, nu) = (r.model.state_dim(), r.model.input_dim());
            if r.initial_state.len() != nx || r.initial_state.iter().any(|v| !v.is_finite()) {
                return Err(ConfigError::field(path("initial_state"), format!("expected {nx} finite values")));
            }
            if r.initial_input.len() != nu || r.initial_input.iter().any(|v| !v.is_finite()) {
                return Err(ConfigError::field(path("initial_input"), format!("expected {nu} finite values")));
            }
            r.shape.polytope().map_err(|e| ConfigError::field(path("shape"), e))?;
            for (name, w, len) in [
                ("weights.q_z", &r.weights.q_z, nx),
                ("weights.q_u", &r.weights.q_u, nu),
                ("weights.q_du", &r.weights.q_du, nu),
            ] {
                if w.len() != len || w.iter().any(|v| !(*v >= 0.0)) {
                    return Err(ConfigError::field(path(name), format!("expected {len} nonnegative values")));
                }
            }
            r.bounds
                .validate(nu)
                .map_err(|e| ConfigError::field(path("bounds"), e.to_string()))?;
            self.robot_spec(k)
                .map_err(|e| ConfigError::field(path("reference"), e.to_string()))?;
        }
        for (k, o) in self.obstacles.iter().enumerate() {
            let v: Vec<Vector2<f64>> = o.vertices.iter().map(|p| Vector2::new(p[0], p[1])).collect();
            let ok = Polytope::from_ccw_vertices(&v)
                .ok()
                .and_then(|p| enumerate_vertices(&p).ok())
                .is_some_and(|v| v.len() >= 3);
            if !ok {
                return Err(ConfigError::field(format!("obstacles[{k}].vertices"), "not a convex polygon"));
            }
        }
        Ok(())
    }

    fn robot_spec(&self, k: usize) -> Result<RobotSpec, crate::error::NmpcError> {
        let r = &self.robots[k];
        let shape = r
            .shape
            .polytope()
            .map_err(crate::error::NmpcError::Invalid)?;
        RobotSpec::new(
            r.model,
            shape,
            CostWeights::diagonal(&r.weights.q_z, &r.weights.q_u, &r.weights.q_du),
            r.bounds.clone(),
            r.reference.clone(),
        )
    }

    /// Builds the simulation world, robots ordered by id.
    pub fn build_world(&self) -> Result<World, RunError> {
        self.validate()?;
        let mut order: Vec<usize> = (0..self.robots.len()).collect();
        order.sort_by_key(|&k| self.robots[k].id);
        let specs = order
            .iter()
            .map(|&k| self.robot_spec(k))
            .collect::<Result<Vec<_>, _>>()?;
        let states = order.iter().map(|&k| self.robots[k].initial_state.clone()).collect();
        let inputs = order.iter().map(|&k| self.robots[k].initial_input.clone()).collect();
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| {
                let v: Vec<Vector2<f64>> = o.vertices.iter().map(|p| Vector2::new(p[0], p[1])).collect();
                Polytope::from_ccw_vertices(&v)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(crate::error::NmpcError::from)?;
        World::new(specs, states, inputs, obstacles, self.coordinator_settings())
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<ScenarioConfig, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for key in REQUIRED {
            if !table.contains_key(key) {
                return Err(ConfigError::field(key, "missing"));
            }
        }
        let cfg: ScenarioConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioConfig::from_toml(&text)
}

pub fn save_scenario(cfg: &ScenarioConfig, path: &Path) -> Result<(), ConfigError> {
    let text = cfg.to_toml()?;
    std::fs::write(path, text).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Runs a scenario in its configured mode for its configured length.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimulationLog, RunError> {
    let mut world = cfg.build_world()?;
    let mut log = run(&mut world, cfg.steps, cfg.mode)?;
    log.ids = cfg.robots.iter().map(|r| r.id).collect();
    log.ids.sort_unstable();
    Ok(log)
}

pub const BUILTIN_NAMES: [&str; 5] = ["platoon2", "platoon3", "platoon4", "hetero6", "overtake"];

pub fn builtin(name: &str) -> Result<ScenarioConfig, ConfigError> {
    match name {
        "platoon2" => builtin_platoon(2),
        "platoon3" => builtin_platoon(3),
        "platoon4" => builtin_platoon(4),
        "hetero6" | "hetero_swap" => Ok(builtin_hetero_swap()),
        "overtake" => Ok(builtin_overtake()),
        _ => Err(ConfigError::UnknownScenario(name.to_string())),
    }
}

fn car(id: usize, x: f64, y: f64, v: f64, lane: f64, v_ref: f64) -> RobotConfig {
    RobotConfig {
        id,
        model: RobotModel::Bicycle(VehicleParams::default()),
        shape: ShapeConfig::Rectangle {
            length: VEHICLE_LENGTH,
            width: VEHICLE_WIDTH,
        },
        initial_state: vec![x, y, 0.0, v],
        initial_input: vec![0.0, 0.0],
        reference: Reference::Lane {
            y: lane,
            psi: 0.0,
            v: v_ref,
        },
        weights: WeightsConfig {
            q_z: vec![0.0, 0.5, 50.0, 1.0],
            q_u: vec![0.1, 1.0],
            q_du: vec![1.0, 10.0],
        },
        bounds: InputBounds {
            u_min: vec![-4.0, -0.3],
            u_max: vec![4.0, 0.3],
            // 1 m/s^2 per sample and 0.2 rad/s.
            rate_max: vec![20.0, 0.2],
        },
    }
}

/// Vehicles merging into the bottom lane. The 2- and 3-vehicle variants use
/// the first vehicles of the 4-vehicle layout.
pub fn builtin_platoon(n: usize) -> Result<ScenarioConfig, ConfigError> {
    if !(2..=4).contains(&n) {
        return Err(ConfigError::field("n_vehicles", "must be 2, 3 or 4"));
    }
    let x0 = [11.5, 5.5, 0.5, 20.0];
    let y0 = [LANES[0], LANES[1], LANES[0], LANES[2]];
    let robots = (0..n).map(|i| car(i, x0[i], y0[i], 15.0, LANES[0], 15.0)).collect();
    Ok(ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: format!("platoon{n}"),
        mode: RunMode::Distributed,
        steps: 200,
        dt: 0.05,
        horizon: 15,
        d_min: 0.5,
        comm_radius: None,
        delay: 0,
        trace_error_bound: false,
        seed: 0,
        solver: SolverConfig::default(),
        robots,
        obstacles: road_edges(3),
    })
}

/// Two long slabs bounding a road of `lanes` lanes starting at `y = 0`.
pub fn road_edges(lanes: usize) -> Vec<ObstacleConfig> {
    let top = lanes as f64 * LANE_WIDTH;
    let slab = |y0: f64, y1: f64| ObstacleConfig {
        vertices: vec![[-100.0, y0], [5000.0, y0], [5000.0, y1], [-100.0, y1]],
    };
    vec![slab(-2.0, 0.0), slab(top, top + 2.0)]
}

fn regular_polygon(m: usize, radius: f64, phase: f64) -> Vec<[f64; 2]> {
    (0..m)
        .map(|k| {
            let a = phase + 2.0 * PI * k as f64 / m as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

/// Body-frame footprints of the six robots of the swap experiment.
pub fn hetero_shapes() -> Vec<ShapeConfig> {
    vec![
        ShapeConfig::Polygon {
            vertices: vec![[0.3, -0.3], [0.3, 0.3], [-0.3, 0.3], [-0.3, -0.3]],
        },
        ShapeConfig::Polygon {
            vertices: regular_polygon(6, 0.35, 0.0),
        },
        ShapeConfig::Polygon {
            vertices: vec![[0.45, 0.0], [0.2, 0.25], [-0.2, 0.25], [-0.45, 0.0], [-0.2, -0.25], [0.2, -0.25]],
        },
        ShapeConfig::Polygon {
            vertices: vec![[0.4, 0.0], [0.1, 0.35], [-0.3, 0.25], [-0.3, -0.2], [0.15, -0.35]],
        },
        ShapeConfig::Polygon {
            vertices: vec![[0.45, 0.0], [-0.3, 0.35], [-0.3, -0.35]],
        },
        ShapeConfig::Polygon {
            vertices: regular_polygon(5, 0.35, 0.0),
        },
    ]
}

/// Six unicycle robots on a circle of radius 5 m swapping to the
/// diametrically opposite positions.
/// Lateral offset at mid-route of the swap paths (to the right of travel).
const SWAP_SWERVE: f64 = 1.0;
const SWAP_SPEED: f64 = 1.0;

/// Parabolic route from `a` to `b` bulging `offset` to the right.
fn swerve_path(a: &[f64; 3], b: &[f64; 3], offset: f64, samples: usize) -> Vec<[f64; 2]> {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = dx.hypot(dy);
    let (rx, ry) = (dy / len, -dx / len);
    (0..=samples)
        .map(|i| {
            let t = i as f64 / samples as f64;
            let bulge = 4.0 * offset * t * (1.0 - t);
            [a[0] + t * dx + bulge * rx, a[1] + t * dy + bulge * ry]
        })
        .collect()
}

pub fn builtin_hetero_swap() -> ScenarioConfig {
    let radius = 5.0;
    let starts: Vec<[f64; 3]> = (0..6)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / 6.0;
            [radius * a.cos(), radius * a.sin(), wrap_angle(a + PI)]
        })
        .collect();
    let robots = hetero_shapes()
        .into_iter()
        .enumerate()
        .map(|(k, shape)| {
            let goal = starts[(k + 3) % 6];
            RobotConfig {
                id: k,
                model: RobotModel::Unicycle,
                shape,
                initial_state: starts[k].to_vec(),
                initial_input: vec![0.0, 0.0],
                reference: Reference::Path {
                    points: swerve_path(&starts[k], &goal, SWAP_SWERVE, 40),
                    speed: SWAP_SPEED,
                },
                weights: WeightsConfig {
                    q_z: vec![1.0, 1.0, 0.0],
                    q_u: vec![0.01, 0.01],
                    q_du: vec![0.1, 0.1],
                },
                bounds: InputBounds {
                    u_min: vec![-4.0, -2.0],
                    u_max: vec![4.0, 2.0],
                    // 0.5 m/s and 0.5 rad/s per sample.
                    rate_max: vec![10.0, 10.0],
                },
            }
        })
        .collect();
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: "hetero6".into(),
        mode: RunMode::Distributed,
        steps: 600,
        dt: 0.05,
        horizon: 15,
        d_min: 0.1,
        comm_radius: None,
        delay: 0,
        trace_error_bound: false,
        seed: 0,
        solver: SolverConfig::default(),
        robots,
        obstacles: Vec::new(),
    }
}

/// Two cars: car 0 starts 10 m behind car 1 in the lane to its left, is
/// faster, and wants to end up in car 1's lane.
pub fn builtin_overtake() -> ScenarioConfig {
    let robots = vec![
        car(0, 0.0, LANES[1], 18.0, LANES[0], 18.0),
        car(1, 10.0, LANES[0], 12.0, LANES[0], 12.0),
    ];
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: "overtake".into(),
        mode: RunMode::Distributed,
        steps: 200,
        dt: 0.05,
        horizon: 15,
        d_min: 0.5,
        comm_radius: None,
        delay: 0,
        trace_error_bound: true,
        seed: 0,
        solver: SolverConfig::default(),
        robots,
        obstacles: Vec::new(),
    }
}
