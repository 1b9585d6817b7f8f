//! Command-line front end. `run` returns the process exit code.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::harness::{bench, emit_trace, simulate, EmitOptions, Outcome, SimOptions, TraceFormat};
use crate::planner::{plan_cycle, FailureReason, Provenance, SolverReport, Trajectory};
use crate::scenario::{load_scenario, validate, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_NOMINAL: i32 = 2;
pub const EXIT_COLLISION: i32 = 3;
pub const EXIT_GATE: i32 = 4;

/// Environment variable holding the log level.
pub const LOG_ENV: &str = "CORRIDOR_PLANNER_LOG";

#[derive(Debug, Parser)]
#[command(name = "corridor-planner", version, about = "Decision and trajectory planning for low-speed delivery vehicles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate scenario files.
    Check(Common),
    /// Run one planning cycle and write the trajectory.
    Plan(Common),
    /// Closed-loop simulation with trace output.
    Simulate(Common),
    /// Time planning cycles over a scenario suite.
    Bench(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario JSON files.
    #[arg(required = true)]
    pub scenarios: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1200)]
    pub max_cycles: usize,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 20)]
    pub warmup: usize,
    /// Trace formats: csv, json, svg. Defaults to csv and json.
    #[arg(long = "format")]
    pub formats: Vec<TraceFormat>,
    /// Config override `section.key=value`, applied after the file config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Record measured timings in trace and plan outputs.
    #[arg(long)]
    pub wall_clock: bool,
}

/// Parse arguments and run. Does not install a logger.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
        }
    };
    execute(&cli)
}

pub fn execute(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Check(c) => check(c),
        Command::Plan(c) => plan(c),
        Command::Simulate(c) => run_simulate(c),
        Command::Bench(c) => run_bench(c),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
    }
}

/// Read, parse, override and validate one scenario file.
pub fn load(path: &Path, overrides: &[String]) -> Result<Scenario, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut sc = load_scenario(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    for o in overrides {
        sc.config
            .apply_override(o)
            .map_err(|e| format!("{}: {e}", path.display()))?;
    }
    let problems = validate(&sc);
    if !problems.is_empty() {
        return Err(format!("{}: invalid scenario: {}", path.display(), problems.join("; ")));
    }
    if sc.name.is_none() {
        sc.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    Ok(sc)
}

fn load_all(c: &Common) -> Result<Vec<Scenario>, String> {
    c.scenarios.iter().map(|p| load(p, &c.overrides)).collect()
}

fn check(c: &Common) -> Result<i32, String> {
    let mut failed = false;
    for path in &c.scenarios {
        match load(path, &c.overrides) {
            Ok(_) if c.scenarios.len() == 1 => println!("OK"),
            Ok(_) => println!("{}: OK", path.display()),
            Err(msg) => {
                eprintln!("{msg}");
                failed = true;
            }
        }
    }
    Ok(if failed { EXIT_INPUT } else { EXIT_OK })
}

pub const TRAJECTORY_HEADER: &str = "t,x,y,heading,curvature,speed,accel";

pub fn trajectory_csv(t: &Trajectory) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for s in &t.samples {
        let _ = writeln!(
            out,
            "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.t, s.position.x, s.position.y, s.heading, s.curvature, s.speed, s.accel
        );
    }
    out
}

#[derive(Debug, Serialize)]
struct PlanSummary<'a> {
    scenario: String,
    provenance: Provenance,
    failure: Option<&'a FailureReason>,
    labels: Vec<(&'a str, &'a str)>,
    path_solver: Option<SolverSummary<'a>>,
    speed_solver: Option<SolverSummary<'a>>,
    curvature_clamped: bool,
    stop_demand: bool,
    timings: Option<&'a crate::planner::PhaseTimings>,
}

#[derive(Debug, Serialize)]
struct SolverSummary<'a> {
    status: &'a str,
    iterations: usize,
    objective: f64,
    polished: bool,
    solve_time: Option<f64>,
}

fn solver_summary(r: &SolverReport, wall_clock: bool) -> SolverSummary<'_> {
    SolverSummary {
        status: &r.status,
        iterations: r.iterations,
        objective: r.objective,
        polished: r.polished,
        solve_time: wall_clock.then_some(r.solve_time),
    }
}

fn plan(c: &Common) -> Result<i32, String> {
    let scenarios = load_all(c)?;
    let mut code = EXIT_OK;
    for (path, sc) in c.scenarios.iter().zip(&scenarios) {
        let traj = plan_cycle(sc, None);
        let d = &traj.diagnostics;
        let name = sc.name.clone().unwrap_or_default();
        if let Some(f) = &d.failure {
            warn!("{name}: fallback in {} ({}): {}", f.phase, f.kind, f.message);
            code = EXIT_NOT_NOMINAL;
        }
        let summary = PlanSummary {
            scenario: name.clone(),
            provenance: traj.provenance,
            failure: d.failure.as_ref(),
            labels: d.labels.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
            path_solver: d.path_solver.as_ref().map(|r| solver_summary(r, c.wall_clock)),
            speed_solver: d.speed_solver.as_ref().map(|r| solver_summary(r, c.wall_clock)),
            curvature_clamped: d.curvature_clamped,
            stop_demand: d.stop_demand,
            timings: c.wall_clock.then_some(&d.timings),
        };
        let mut json = serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())?;
        json.push('\n');
        match &c.out {
            Some(dir) => {
                let dir = if scenarios.len() > 1 { dir.join(&name) } else { dir.clone() };
                fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
                write(&dir.join("trajectory.csv"), &trajectory_csv(&traj))?;
                write(&dir.join("plan.json"), &json)?;
                info!("{}: wrote {}", path.display(), dir.display());
            }
            None => {
                print!("{}", trajectory_csv(&traj));
                print!("{json}");
            }
        }
    }
    Ok(code)
}

fn write(path: &Path, body: &str) -> Result<(), String> {
    fs::write(path, body).map_err(|e| format!("{}: {e}", path.display()))
}

fn exit_for(outcome: Outcome) -> i32 {
    match outcome {
        Outcome::GoalReached => EXIT_OK,
        Outcome::Collision => EXIT_COLLISION,
        Outcome::Stopped | Outcome::Timeout => EXIT_NOT_NOMINAL,
    }
}

fn run_simulate(c: &Common) -> Result<i32, String> {
    let scenarios = load_all(c)?;
    let opts = SimOptions {
        max_cycles: c.max_cycles,
        seed: c.seed,
        ..SimOptions::default()
    };
    let emit = EmitOptions {
        formats: if c.formats.is_empty() {
            EmitOptions::default().formats
        } else {
            c.formats.clone()
        },
        wall_clock: c.wall_clock,
    };
    let one = |sc: &Scenario| -> Result<i32, String> {
        let trace = simulate(sc, &opts);
        let name = trace.scenario.clone();
        println!(
            "{name}: {} after {} cycles ({} fallbacks, {} guardian triggers)",
            trace.outcome,
            trace.records.len(),
            trace.fallbacks(),
            trace.guardian_triggers()
        );
        if let Some(dir) = &c.out {
            let dir = if scenarios.len() > 1 { dir.join(&name) } else { dir.clone() };
            let files = emit_trace(&trace, sc, &dir, &emit).map_err(|e| format!("{}: {e}", dir.display()))?;
            for f in files {
                debug!("wrote {}", f.display());
            }
        }
        Ok(exit_for(trace.outcome))
    };
    let codes: Vec<Result<i32, String>> = if c.jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(c.jobs)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| scenarios.par_iter().map(one).collect())
    } else {
        scenarios.iter().map(one).collect()
    };
    let mut worst = EXIT_OK;
    for code in codes {
        let code = code?;
        // collision outranks every other outcome
        if code == EXIT_COLLISION || (worst == EXIT_OK && code != EXIT_OK) {
            worst = code;
        }
    }
    Ok(worst)
}

fn run_bench(c: &Common) -> Result<i32, String> {
    let mut scenarios = load_all(c)?;
    if c.reps < 100 {
        warn!("{} repetitions is below 100; high percentiles are unreliable", c.reps);
    }
    scenarios.shuffle(&mut ChaCha8Rng::seed_from_u64(c.seed));
    let report = bench(&scenarios, c.reps, c.warmup, c.jobs.max(1));
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
    json.push('\n');
    print!("{}", report.table());
    match &c.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            write(&dir.join("bench.json"), &json)?;
        }
        None => print!("{json}"),
    }
    for s in report.scenarios.iter().filter(|s| !s.deterministic) {
        warn!("{}: planner output differed between repetitions", s.scenario);
    }
    Ok(if report.qp_gate_pass { EXIT_OK } else { EXIT_GATE })
}
