use std::path::Path;

use dualcoord::scenarios::{builtin_platoon, save_scenario};
use dualcoord_cli::{run_cli, EXIT_ABORT, EXIT_CONFIG, EXIT_OK};

fn cli(args: &[&str]) -> i32 {
    run_cli(std::iter::once("dualcoord").chain(args.iter().copied()))
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn platoon_run_writes_all_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let code = cli(&[
        "--scenario",
        "platoon4",
        "--mode",
        "distributed",
        "--steps",
        "5",
        "--out",
        out.to_str().unwrap(),
        "--timing",
    ]);
    assert_eq!(code, EXIT_OK);
    for f in [
        "trajectories.csv",
        "timings.csv",
        "costs.csv",
        "plot_positions.csv",
        "plot_inputs.csv",
        "plot_distances.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert!(!out.join("error_trace.csv").exists());
    assert_eq!(rows(&out.join("trajectories.csv")).len(), 5 * 4);
    let timings = rows(&out.join("timings.csv"));
    assert_eq!(timings.len(), 5);
    assert_eq!(&timings[4][0], "all");
}

#[test]
fn single_step_gives_one_row_per_robot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["--scenario", "platoon2", "--steps", "1", "--out", out]), EXIT_OK);
    let r = rows(&dir.path().join("trajectories.csv"));
    assert_eq!(r.len(), 2);
    assert_eq!((&r[0][1], &r[1][1]), ("0", "1"));
}

#[test]
fn error_trace_written_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = cli(&["--scenario", "overtake", "--steps", "20", "--out", out, "--trace-error-bound"]);
    assert_eq!(code, EXIT_OK);
    let r = rows(&dir.path().join("error_trace.csv"));
    assert_eq!(r.len(), 20);
    for row in &r {
        let e: f64 = row[6].parse().unwrap();
        let bound: f64 = row[7].parse().unwrap();
        assert!(e <= bound + 1e-9);
    }
}

#[test]
fn centralized_mode_and_file_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p2.toml");
    save_scenario(&builtin_platoon(2).unwrap(), &path).unwrap();
    let out = dir.path().join("out");
    let code = cli(&[
        "--scenario",
        path.to_str().unwrap(),
        "--mode",
        "centralized",
        "--steps",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(rows(&out.join("trajectories.csv")).len(), 6);
}

#[test]
fn bad_input_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(cli(&["--scenario", "platoon2", "--bogus", "--out", out]), EXIT_CONFIG);
    assert_eq!(cli(&["--scenario", "platoon9", "--out", out]), EXIT_CONFIG);
    assert_eq!(cli(&["--scenario", "platoon2", "--mode", "sideways", "--out", out]), EXIT_CONFIG);

    let text = builtin_platoon(2).unwrap().to_toml().unwrap();
    let broken: String = text.lines().filter(|l| !l.starts_with("d_min")).collect::<Vec<_>>().join("\n");
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, broken).unwrap();
    assert_eq!(cli(&["--scenario", path.to_str().unwrap(), "--out", out]), EXIT_CONFIG);
}

#[test]
fn overlapping_start_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = builtin_platoon(2).unwrap();
    // Second car parked on top of the first one.
    cfg.robots[1].initial_state = cfg.robots[0].initial_state.clone();
    cfg.robots[1].initial_state[0] += 1.0;
    cfg.steps = 30;
    let path = dir.path().join("crash.toml");
    save_scenario(&cfg, &path).unwrap();
    let out = dir.path().join("out");
    let code = cli(&["--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_ABORT);
    let r = rows(&out.join("trajectories.csv"));
    assert!(!r.is_empty() && r.len() < 60);
}
