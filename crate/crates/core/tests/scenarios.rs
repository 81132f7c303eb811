use dualcoord::coordinator::RunMode;
use dualcoord::error::ConfigError;
use dualcoord::error_bound::{AcceptableError, ErrorTrace};
use dualcoord::export::{export_outputs, COST_HEADER, ERROR_TRACE_HEADER, TIMING_HEADER, TRAJECTORY_HEADER};
use dualcoord::scenarios::{builtin, builtin_hetero_swap, builtin_platoon, run_scenario, ScenarioConfig, BUILTIN_NAMES};

#[test]
fn builtins_round_trip_through_toml() {
    for name in BUILTIN_NAMES {
        let cfg = builtin(name).unwrap();
        cfg.validate().unwrap();
        let back = ScenarioConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg, "{name}");
        for r in &cfg.robots {
            let p = r.shape.polytope().unwrap();
            assert!(p.b.iter().all(|&b| b > 0.0), "{name} robot {}: origin not interior", r.id);
        }
    }
}

#[test]
fn missing_field_is_named() {
    let text = builtin("platoon2").unwrap().to_toml().unwrap();
    let broken: String = text.lines().filter(|l| !l.starts_with("d_min")).collect::<Vec<_>>().join("\n");
    let err = ScenarioConfig::from_toml(&broken).unwrap_err();
    assert!(err.to_string().contains("d_min"), "{err}");
}

#[test]
fn bad_values_rejected() {
    assert!(builtin_platoon(5).is_err());
    assert!(matches!(builtin("nope"), Err(ConfigError::UnknownScenario(_))));
    let mut cfg = builtin_platoon(2).unwrap();
    cfg.dt = 0.0;
    assert!(matches!(cfg.validate(), Err(ConfigError::Field { field, .. }) if field == "dt"));
    let mut cfg = builtin_platoon(2).unwrap();
    cfg.robots[1].id = cfg.robots[0].id;
    assert!(matches!(cfg.validate(), Err(ConfigError::Field { field, .. }) if field == "robots[1].id"));
}

#[test]
fn hetero_goals_are_opposite_starts() {
    let cfg = builtin_hetero_swap();
    assert_eq!(cfg.robots.len(), 6);
    for r in &cfg.robots {
        let s = &r.initial_state;
        let g = &cfg.robots[(r.id + 3) % 6].initial_state;
        assert!((s[0] + g[0]).abs() < 1e-9 && (s[1] + g[1]).abs() < 1e-9);
    }
}

fn read(path: &std::path::Path) -> (Vec<String>, usize) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    (header, rdr.records().count())
}

#[test]
fn export_headers_and_row_counts() {
    let mut cfg = builtin("overtake").unwrap();
    cfg.steps = 8;
    cfg.mode = RunMode::Distributed;
    cfg.trace_error_bound = true;
    let log = run_scenario(&cfg).unwrap();
    let trace = ErrorTrace::from_log(&log, AcceptableError::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = export_outputs(&log, Some(&trace), dir.path()).unwrap();
    assert_eq!(files.len(), 8);
    let n = cfg.robots.len();

    let (h, rows) = read(&dir.path().join("trajectories.csv"));
    assert_eq!(h, TRAJECTORY_HEADER);
    assert_eq!(rows, 8 * n);
    let (h, rows) = read(&dir.path().join("timings.csv"));
    assert_eq!(h, TIMING_HEADER);
    assert_eq!(rows, n + 1);
    let (h, rows) = read(&dir.path().join("costs.csv"));
    assert_eq!(h, COST_HEADER);
    assert_eq!(rows, n + 2);
    let (h, rows) = read(&dir.path().join("error_trace.csv"));
    assert_eq!(h, ERROR_TRACE_HEADER);
    assert_eq!(rows, trace.rows.len());
    let (_, rows) = read(&dir.path().join("plot_positions.csv"));
    assert_eq!(rows, 8);
}
