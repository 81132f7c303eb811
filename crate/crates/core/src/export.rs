//! CSV output of a run.
//!
//! | file | columns |
//! |------|---------|
//! | `trajectories.csv` | `t, robot_id, x, y, psi, v, a_or_v_cmd, delta_or_omega, min_neighbor_dist, nmpc_status` |
//! | `timings.csv` | `robot_id, nmpc_avg_s, nmpc_max_s, ca_avg_s, ca_max_s, total_avg_s` |
//! | `costs.csv` | `robot_id, closed_loop_cost` |
//! | `error_trace.csv` | `t, i, j, dist_pi, dist_pj, true_dist, e_predict, bound, trivial_bound, alpha_min, ratio, c_i, c_j, c_i_formula, c_j_formula` |
//!
//! `t` is in seconds. `v` is blank for models without a speed state. The
//! last row of `timings.csv` has `robot_id = all` and averages over robots;
//! `costs.csv` ends with a `total` row and a `mean` row.
//!
//! Plot files hold one row per step in wide format: `plot_positions.csv`
//! (`t, x_<id>, y_<id>, ...`), `plot_inputs.csv` (`t, u0_<id>, u1_<id>, ...`),
//! `plot_distances.csv` (`t, min_dist_<id>, ...`) and, with a trace,
//! `plot_error_bound.csv` (`t, dist_pi, dist_pj, true_dist, e_predict, bound,
//! trivial_bound, ratio`) for the first traced pair.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use csv::Writer;

use crate::coordinator::SimulationLog;
use crate::dynamics::RobotModel;
use crate::error::RunError;
use crate::error_bound::ErrorTrace;

pub const TRAJECTORY_HEADER: [&str; 10] = [
    "t",
    "robot_id",
    "x",
    "y",
    "psi",
    "v",
    "a_or_v_cmd",
    "delta_or_omega",
    "min_neighbor_dist",
    "nmpc_status",
];
pub const TIMING_HEADER: [&str; 6] = ["robot_id", "nmpc_avg_s", "nmpc_max_s", "ca_avg_s", "ca_max_s", "total_avg_s"];
pub const COST_HEADER: [&str; 2] = ["robot_id", "closed_loop_cost"];
pub const ERROR_TRACE_HEADER: [&str; 15] = [
    "t",
    "i",
    "j",
    "dist_pi",
    "dist_pj",
    "true_dist",
    "e_predict",
    "bound",
    "trivial_bound",
    "alpha_min",
    "ratio",
    "c_i",
    "c_j",
    "c_i_formula",
    "c_j_formula",
];

/// Per-robot timing summary in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub nmpc_avg: f64,
    pub nmpc_max: f64,
    pub ca_avg: f64,
    pub ca_max: f64,
}

impl TimingRow {
    pub fn total_avg(&self) -> f64 {
        self.nmpc_avg + self.ca_avg
    }
}

pub fn timing_table(log: &SimulationLog) -> Vec<TimingRow> {
    let n = log.steps.len().max(1) as f64;
    (0..log.robots)
        .map(|r| {
            let nmpc = log.steps.iter().map(|s| s.nmpc_time[r]);
            let ca = log.steps.iter().map(|s| s.ca_time[r]);
            TimingRow {
                nmpc_avg: nmpc.clone().sum::<f64>() / n,
                nmpc_max: nmpc.fold(0.0, f64::max),
                ca_avg: ca.clone().sum::<f64>() / n,
                ca_max: ca.fold(0.0, f64::max),
            }
        })
        .collect()
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn writer(dir: &Path, name: &str, files: &mut Vec<PathBuf>) -> Result<Writer<File>, RunError> {
    let path = dir.join(name);
    let w = Writer::from_path(&path)?;
    files.push(path);
    Ok(w)
}

/// Writes all output files into `dir` (created if missing) and returns their
/// paths.
pub fn export_outputs(log: &SimulationLog, trace: Option<&ErrorTrace>, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    write_trajectories(log, writer(dir, "trajectories.csv", &mut files)?)?;
    write_timings(log, writer(dir, "timings.csv", &mut files)?)?;
    write_costs(log, writer(dir, "costs.csv", &mut files)?)?;
    write_plot_positions(log, writer(dir, "plot_positions.csv", &mut files)?)?;
    write_plot_inputs(log, writer(dir, "plot_inputs.csv", &mut files)?)?;
    write_plot_distances(log, writer(dir, "plot_distances.csv", &mut files)?)?;
    if let Some(trace) = trace {
        write_error_trace(log, trace, writer(dir, "error_trace.csv", &mut files)?)?;
        write_plot_error(log, trace, writer(dir, "plot_error_bound.csv", &mut files)?)?;
    }
    Ok(files)
}

fn write_trajectories(log: &SimulationLog, mut w: Writer<File>) -> Result<(), RunError> {
    w.write_record(TRAJECTORY_HEADER)?;
    for s in &log.steps {
        for r in 0..log.robots {
            let z = &s.states[r];
            let u = &s.inputs[r];
            let v = match log.models[r] {
                RobotModel::Bicycle(_) => fmt(z[3]),
                RobotModel::Unicycle => String::new(),
            };
            w.write_record([
                fmt(s.t as f64 * log.dt),
                log.ids[r].to_string(),
                fmt(z[0]),
                fmt(z[1]),
                fmt(z[2]),
                v,
                fmt(u[0]),
                fmt(u[1]),
                fmt(s.min_neighbor_dist[r]),
                s.status[r].as_str().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_timings(log: &SimulationLog, mut w: Writer<File>) -> Result<(), RunError> {
    w.write_record(TIMING_HEADER)?;
    let rows = timing_table(log);
    for (r, t) in rows.iter().enumerate() {
        w.write_record([
            log.ids[r].to_string(),
            fmt(t.nmpc_avg),
            fmt(t.nmpc_max),
            fmt(t.ca_avg),
            fmt(t.ca_max),
            fmt(t.total_avg()),
        ])?;
    }
    let m = rows.len().max(1) as f64;
    let mean = |f: fn(&TimingRow) -> f64| rows.iter().map(f).sum::<f64>() / m;
    w.write_record([
        "all".to_string(),
        fmt(mean(|t| t.nmpc_avg)),
        fmt(rows.iter().map(|t| t.nmpc_max).fold(0.0, f64::max)),
        fmt(mean(|t| t.ca_avg)),
        fmt(rows.iter().map(|t| t.ca_max).fold(0.0, f64::max)),
        fmt(mean(|t| t.total_avg())),
    ])?;
    w.flush()?;
    Ok(())
}

fn write_costs(log: &SimulationLog, mut w: Writer<File>) -> Result<(), RunError> {
    w.write_record(COST_HEADER)?;
    let costs = log.closed_loop_costs();
    for (r, c) in costs.iter().enumerate() {
        w.write_record([log.ids[r].to_string(), fmt(*c)])?;
    }
    let total: f64 = costs.iter().sum();
    w.write_record(["total".to_string(), fmt(total)])?;
    w.write_record(["mean".to_string(), fmt(total / costs.len().max(1) as f64)])?;
    w.flush()?;
    Ok(())
}

fn write_error_trace(log: &SimulationLog, trace: &ErrorTrace, mut w: Writer<File>) -> Result<(), RunError> {
    w.write_record(ERROR_TRACE_HEADER)?;
    for r in &trace.rows {
        w.write_record([
            fmt(r.t as f64 * log.dt),
            log.ids[r.i].to_string(),
            log.ids[r.j].to_string(),
            fmt(r.dist_pi),
            fmt(r.dist_pj),
            fmt(r.true_dist),
            fmt(r.e_predict),
            fmt(r.bound),
            fmt(r.trivial_bound),
            fmt(r.alpha_min),
            r.ratio.map(fmt).unwrap_or_default(),
            fmt(r.c_i),
            fmt(r.c_j),
            fmt(r.c_i_formula),
            fmt(r.c_j_formula),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_plot_positions(log: &SimulationLog, mut w: Writer<File>) -> Result<(), RunError> {
    let mut header = vec!["t".to_string()];
    for id in &log.ids {
        header.push(format!("x_{id}"));
        header.push(format!("y_{id}"));
    }
    w.write_record(&header)?;
    for s in &log.steps {
        let mut row = vec![fmt(s.t as f64 * log.dt)];
        for z in &s.states {
            row.push(fmt(z[0]));
            row.push(fmt(z[1]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_plot_inputs(log: &SimulationLog, mut w: Writer<File>) -> Result<(), RunError> {
    let mut header = vec!["t".to_string()];
    for id in &log.ids {
        header.push(format!("u0_{id}"));
        header.push(format!("u1_{id}"));
    }
    w.write_record(&header)?;
    for s in &log.steps {
        let mut row = vec![fmt(s.t as f64 * log.dt)];
        for u in &s.inputs {
            row.push(fmt(u[0]));
            row.push(fmt(u[1]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_plot_distances(log: &SimulationLog, mut w: Writer<File>) -> Result<(), RunError> {
    let mut header = vec!["t".to_string()];
    header.extend(log.ids.iter().map(|id| format!("min_dist_{id}")));
    w.write_record(&header)?;
    for s in &log.steps {
        let mut row = vec![fmt(s.t as f64 * log.dt)];
        row.extend(s.min_neighbor_dist.iter().map(|&d| fmt(d)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_plot_error(log: &SimulationLog, trace: &ErrorTrace, mut w: Writer<File>) -> Result<(), RunError> {
    w.write_record([
        "t",
        "dist_pi",
        "dist_pj",
        "true_dist",
        "e_predict",
        "bound",
        "trivial_bound",
        "ratio",
    ])?;
    let Some(first) = trace.rows.first() else {
        w.flush()?;
        return Ok(());
    };
    for r in trace.rows.iter().filter(|r| (r.i, r.j) == (first.i, first.j)) {
        w.write_record([
            fmt(r.t as f64 * log.dt),
            fmt(r.dist_pi),
            fmt(r.dist_pj),
            fmt(r.true_dist),
            fmt(r.e_predict),
            fmt(r.bound),
            fmt(r.trivial_bound),
            r.ratio.map(fmt).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
