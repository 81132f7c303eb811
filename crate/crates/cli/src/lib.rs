//! Command-line front end: runs a builtin or file scenario and writes the
//! CSV outputs.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use dualcoord::coordinator::{safety_audit, RunMode};
use dualcoord::error::{ConfigError, RunError};
use dualcoord::error_bound::{AcceptableError, ErrorTrace};
use dualcoord::export::{export_outputs, timing_table};
use dualcoord::scenarios::{builtin, load_scenario, run_scenario, ScenarioConfig, BUILTIN_NAMES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABORT: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Centralized,
    Distributed,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> RunMode {
        match m {
            ModeArg::Centralized => RunMode::Centralized,
            ModeArg::Distributed => RunMode::Distributed,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dualcoord", about = "Multi-robot NMPC with dual collision avoidance")]
pub struct Args {
    /// Builtin scenario name or path to a scenario TOML file.
    #[arg(long)]
    pub scenario: String,
    /// Overrides the scenario's mode.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Overrides the number of closed-loop steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Communication delay in rounds.
    #[arg(long)]
    pub delay: Option<usize>,
    /// Record pair data and write the prediction-error trace.
    #[arg(long)]
    pub trace_error_bound: bool,
    /// Print the timing table.
    #[arg(long)]
    pub timing: bool,
}

/// Builtin names win over files of the same name.
fn resolve(name: &str) -> Result<ScenarioConfig, ConfigError> {
    if BUILTIN_NAMES.contains(&name) || !Path::new(name).exists() {
        builtin(name)
    } else {
        load_scenario(Path::new(name))
    }
}

fn configure(args: &Args) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = resolve(&args.scenario)?;
    if let Some(m) = args.mode {
        cfg.mode = m.into();
    }
    if let Some(s) = args.steps {
        cfg.steps = s;
    }
    if let Some(d) = args.delay {
        cfg.delay = d;
    }
    cfg.trace_error_bound |= args.trace_error_bound;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `argv` (program name first), runs and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let cfg = match configure(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match execute(&cfg, &args) {
        Ok(code) => code,
        Err(RunError::Config(e)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(RunError::Nmpc(e)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cfg: &ScenarioConfig, args: &Args) -> Result<i32, RunError> {
    let log = run_scenario(cfg)?;
    let trace = if cfg.trace_error_bound {
        Some(ErrorTrace::from_log(&log, AcceptableError::default())?)
    } else {
        None
    };
    let files = export_outputs(&log, trace.as_ref(), &args.out)?;
    let audit = safety_audit(&log, log.d_min - 1e-3);
    println!(
        "{}: {} {} steps, min distance {:.4}, total cost {:.3}",
        cfg.name,
        cfg.mode.as_str(),
        log.len(),
        audit.min_distance,
        log.total_cost()
    );
    if let Some(t) = &trace {
        let worst = t.rows.iter().map(|r| r.e_predict - r.bound).fold(f64::NEG_INFINITY, f64::max);
        println!("error trace: {} rows, max(e_predict - bound) = {worst:.3e}", t.rows.len());
    }
    if args.timing {
        println!("robot  nmpc_avg_s  nmpc_max_s  ca_avg_s  ca_max_s  total_avg_s");
        for (r, row) in timing_table(&log).iter().enumerate() {
            println!(
                "{:>5}  {:>10.6}  {:>10.6}  {:>8.6}  {:>8.6}  {:>11.6}",
                log.ids[r],
                row.nmpc_avg,
                row.nmpc_max,
                row.ca_avg,
                row.ca_max,
                row.total_avg()
            );
        }
    }
    for f in &files {
        println!("wrote {}", f.display());
    }
    if let Some(a) = &log.abort {
        eprintln!(
            "aborted: robot {} infeasible for {} consecutive steps at t = {}",
            log.ids[a.robot], a.count, a.t
        );
        return Ok(EXIT_ABORT);
    }
    Ok(EXIT_OK)
}
