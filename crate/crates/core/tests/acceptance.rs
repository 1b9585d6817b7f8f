//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Every tolerance is a constant below.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use corridor_planner::decision::dp_search;
use corridor_planner::geometry::Vec2;
use corridor_planner::guardian::{severity, GuardianLevel};
use corridor_planner::harness::{bench, simulate, SimOptions, CYCLE_P99_BUDGET, QP_P99_BUDGET};
use corridor_planner::planner::{plan_cycle, Provenance};
use corridor_planner::qp::{build_objective, solve_qp, History, QpStatus, ReferenceProfile, ReferenceProfileSet, SolverSettings};
use corridor_planner::scenario::load_scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

// criterion 1
const MIN_SCENARIOS: usize = 20;
const BENCH_REPS: usize = 200;
const BENCH_WARMUP: usize = 20;
const BENCH_WALL_BUDGET: f64 = 300.0;
// criterion 2
const OBJECTIVE_REL_TOL: f64 = 1e-9;
const GRADIENT_REL_TOL: f64 = 1e-6;
const POINTS_PER_CONFIG: usize = 100;
// criterion 3
const QP_PROBLEMS: usize = 50;
const QP_MAX_DIM: usize = 8;
const QP_OBJECTIVE_REL_TOL: f64 = 1e-6;
const QP_FEASIBILITY_TOL: f64 = 1e-4;
// criterion 4
const DP_LATTICES: usize = 20;
const DP_MAX_NODES: usize = 50;
// criterion 5
const SWEEP_DENSITY: usize = 10;
const CLEARANCE_TOL: f64 = -1e-6;
// criterion 6
const LATERAL_TOL: f64 = 1e-6;
const RAMP_SPEED_TOL: f64 = 0.05;
// criterion 7
const MIRROR_TOL: f64 = 1e-9;
// criterion 8
const SEVERITY_SAMPLES: usize = 1000;
const INTRUSION_GAP: f64 = 5.0;
const INTRUSION_CLOSING: f64 = 5.0;
const INTRUSION_MAX_CYCLES: usize = 1;
// criterion 9
const FUZZ_SCENARIOS: usize = 500;
const FUZZ_CYCLES: usize = 15;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn timing() -> Verdict {
    let suite = suite();
    let start = Instant::now();
    let report = bench(&suite, BENCH_REPS, BENCH_WARMUP, 1);
    let wall = start.elapsed().as_secs_f64();
    let deterministic = report.scenarios.iter().all(|s| s.deterministic);
    let samples_ok = report.cycle.samples == suite.len() * BENCH_REPS;
    check(
        suite.len() >= MIN_SCENARIOS
            && samples_ok
            && report.qp_total.p99 <= QP_P99_BUDGET
            && report.cycle.p99 <= CYCLE_P99_BUDGET
            && wall <= BENCH_WALL_BUDGET
            && deterministic,
        format!(
            "{} scenarios x {} reps: qp p99 {:.3} ms (<= {:.0}), cycle p99 {:.3} ms (<= {:.0}), bench {:.1} s (<= {:.0}), deterministic {}",
            suite.len(),
            BENCH_REPS,
            report.qp_total.p99 * 1e3,
            QP_P99_BUDGET * 1e3,
            report.cycle.p99 * 1e3,
            CYCLE_P99_BUDGET * 1e3,
            wall,
            BENCH_WALL_BUDGET,
            deterministic
        ),
    )
}

fn random_profiles(rng: &mut ChaCha8Rng, n: usize, count: usize) -> ReferenceProfileSet {
    let profiles = (0..count)
        .map(|_| {
            let mut p = ReferenceProfile::zeros(n);
            for j in 0..4 {
                for i in 0..n {
                    // sparse weights, every order present somewhere
                    if rng.gen_bool(0.7) || i == j {
                        p.weights[j][i] = rng.gen_range(0.0..5.0);
                    }
                    p.refs[j][i] = rng.gen_range(-10.0..10.0);
                }
            }
            p
        })
        .collect();
    ReferenceProfileSet::new(profiles)
}

fn objective_fidelity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_value = 0.0_f64;
    let mut worst_grad = 0.0_f64;
    let mut configs = 0;
    for &n in &[4usize, 8, 30, 40] {
        for &delta in &[0.2, 0.5, 2.0] {
            for count in 1..=3 {
                configs += 1;
                let refs = random_profiles(&mut rng, n, count);
                let hist = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
                let obj = build_objective(&refs, n, delta, &History { values: hist }).map_err(|e| e.to_string())?;
                for _ in 0..POINTS_PER_CONFIG {
                    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-20.0..20.0)).collect();
                    let direct = objective_oracle(&refs, &y, delta, hist);
                    worst_value = worst_value.max((obj.value(&y) - direct).abs() / direct.abs());
                    let g = obj.gradient(&y);
                    let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                    for i in 0..n {
                        let h = 1e-3 * (1.0 + y[i].abs());
                        let mut yp = y.clone();
                        let mut ym = y.clone();
                        yp[i] += h;
                        ym[i] -= h;
                        let fd = (objective_oracle(&refs, &yp, delta, hist) - objective_oracle(&refs, &ym, delta, hist)) / (2.0 * h);
                        worst_grad = worst_grad.max((fd - g[i]).abs() / gmax);
                    }
                }
            }
        }
    }
    check(
        worst_value <= OBJECTIVE_REL_TOL && worst_grad <= GRADIENT_REL_TOL,
        format!(
            "{configs} configurations x {POINTS_PER_CONFIG} points, orders 0..3: value rel err {worst_value:.2e} (<= {OBJECTIVE_REL_TOL:.0e}), gradient rel err {worst_grad:.2e} (<= {GRADIENT_REL_TOL:.0e})"
        ),
    )
}

fn qp_soundness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let settings = SolverSettings::default();
    let mut worst_obj = 0.0_f64;
    let mut worst_viol = 0.0_f64;
    let mut not_optimal = 0;
    for k in 0..QP_PROBLEMS {
        let n = 1 + k % QP_MAX_DIM;
        let (problem, dense) = random_box_qp(&mut rng, n);
        let sol = solve_qp(&problem, &settings, None);
        if sol.status != QpStatus::Optimal {
            not_optimal += 1;
            continue;
        }
        let reference = dense.projected_gradient();
        let (a, b) = (dense.value(&sol.y), dense.value(&reference));
        worst_obj = worst_obj.max((a - b).abs() / b.abs().max(1.0));
        for i in 0..n {
            worst_viol = worst_viol.max(dense.lo[i] - sol.y[i]).max(sol.y[i] - dense.hi[i]);
        }
    }
    check(
        not_optimal == 0 && worst_obj <= QP_OBJECTIVE_REL_TOL && worst_viol <= QP_FEASIBILITY_TOL,
        format!(
            "{QP_PROBLEMS} problems, N <= {QP_MAX_DIM}: {not_optimal} not optimal, objective rel err {worst_obj:.2e} (<= {QP_OBJECTIVE_REL_TOL:.0e}), max violation {:.2e} (<= {QP_FEASIBILITY_TOL:.0e})",
            worst_viol.max(0.0)
        ),
    )
}

fn dp_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = Vec::new();
    let mut blocked = 0;
    let mut max_nodes = 0;
    for k in 0..DP_LATTICES {
        let (lattice, model) = random_lattice(&mut rng, k % 4 == 0, DP_MAX_NODES);
        max_nodes = max_nodes.max(lattice.node_count());
        let brute = dp_brute_force(&lattice, &model);
        match (dp_search(&lattice, &model), brute) {
            (Ok(r), Some((idx, cost))) => {
                if r.cost != cost || r.indices != idx {
                    mismatches.push(k);
                }
            }
            (Err(_), None) => blocked += 1,
            _ => mismatches.push(k),
        }
    }
    check(
        mismatches.is_empty() && max_nodes <= DP_MAX_NODES,
        format!(
            "{DP_LATTICES} lattices (<= {max_nodes} nodes, {blocked} fully blocked): cost and node sequence equal exhaustive search; mismatches {mismatches:?}"
        ),
    )
}

fn collision_freedom() -> Verdict {
    let opts = SimOptions {
        keep_trajectories: true,
        ..SimOptions::default()
    };
    let mut worst = f64::INFINITY;
    let mut worst_at = String::new();
    let mut gaps = 0;
    let mut swept = 0usize;
    for sc in suite() {
        let body = sc.vehicle.clone();
        let trace = simulate(&sc, &opts);
        gaps += trace.model_gaps();
        for r in &trace.records {
            let Some(traj) = &r.trajectory else { continue };
            if traj.provenance != Provenance::Nominal {
                continue;
            }
            swept += 1;
            let dt = traj.dt() / SWEEP_DENSITY as f64;
            let end = traj.samples.last().unwrap().t;
            let steps = (end / dt).round() as usize;
            for k in 0..=steps {
                let t = k as f64 * dt;
                let s = traj.sample_at(t);
                let ego = rect(s.position.x, s.position.y, s.heading, body.length, body.width);
                for pred in &traj.artifacts.predictions {
                    let c = signed_clearance(&ego, &pred.polygon_at(t));
                    if c < worst {
                        worst = c;
                        worst_at = format!("{} cycle {} t={t:.2} vs {}", trace.scenario, r.cycle, pred.obstacle_id);
                    }
                }
            }
        }
    }
    check(
        worst >= CLEARANCE_TOL && gaps == 0,
        format!(
            "{swept} nominal trajectories swept at {SWEEP_DENSITY}x: min clearance {worst:.4} m (>= {CLEARANCE_TOL:.0e}) at {worst_at}; model_gap events {gaps}"
        ),
    )
}

fn empty_road() -> Verdict {
    let sc = scenario("empty_straight");
    if !sc.obstacles.is_empty() || sc.reference_line.max_abs_curvature() != 0.0 {
        return Err("empty_straight is not an empty straight road".into());
    }
    let traj = plan_cycle(&sc, None);
    let v_target = sc.config.planner.v_target.min(sc.config.planner.speed_limit).min(sc.vehicle.max_speed);
    let lateral = traj.samples.iter().fold(0.0_f64, |m, s| m.max(s.position.y.abs()));
    let speed_err = traj
        .samples
        .iter()
        .map(|s| (s.speed - ramp_speed(s.t, v_target, sc.vehicle.max_accel, sc.vehicle.max_jerk)).abs())
        .fold(0.0_f64, f64::max);
    let trace = simulate(&sc, &SimOptions::default());
    let closed_lateral = trace.records.iter().fold(0.0_f64, |m, r| m.max(r.ego.position.y.abs()));
    check(
        traj.is_nominal() && lateral.max(closed_lateral) <= LATERAL_TOL && speed_err <= RAMP_SPEED_TOL,
        format!(
            "max lateral {:.1e} m (<= {LATERAL_TOL:.0e}), speed vs ramp oracle max err {speed_err:.4} m/s (<= {RAMP_SPEED_TOL})",
            lateral.max(closed_lateral)
        ),
    )
}

const MIRROR_SET: [&str; 8] = [
    "empty_curved",
    "off_center_start",
    "static_bypass_left",
    "static_bypass_right",
    "pedestrian_scripted",
    "merging_cyclist",
    "s_curve",
    "parked_cars",
];

fn mirror_and_determinism() -> Verdict {
    let mut worst = 0.0_f64;
    for name in MIRROR_SET {
        let sc = scenario(name);
        let a = plan_cycle(&sc, None);
        let b = plan_cycle(&sc.mirrored(), None);
        if a.samples.len() != b.samples.len() || a.provenance != b.provenance {
            return Err(format!("{name}: mirrored plan differs in shape or provenance"));
        }
        for (p, q) in a.samples.iter().zip(&b.samples) {
            let back = Vec2::new(q.position.x, -q.position.y);
            worst = worst.max(p.position.distance(back)).max((p.speed - q.speed).abs());
        }
    }

    // byte-identical traces through the command line, twice
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = scenario_dir().join("pedestrian_scripted.json");
    let mut csv = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let args = [
            "corridor-planner",
            "simulate",
            path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "7",
        ];
        let code = corridor_planner::cli::run(args);
        if code != 0 {
            return Err(format!("simulate exited {code}"));
        }
        csv.push(std::fs::read(out.join("trace.csv")).map_err(|e| e.to_string())?);
    }
    let identical = csv[0] == csv[1] && !csv[0].is_empty();
    check(
        worst <= MIRROR_TOL && identical,
        format!(
            "{} mirrored scenarios: max deviation {worst:.1e} (<= {MIRROR_TOL:.0e}); trace.csv byte-identical across runs: {identical}",
            MIRROR_SET.len()
        ),
    )
}

fn guardian() -> Verdict {
    // the scripted intrusion closes 5 m at 5 m/s
    let sc = scenario("intrusion");
    let ob = &sc.obstacles[0];
    let ego_rect = rect(sc.ego.position.x, sc.ego.position.y, sc.ego.heading, sc.vehicle.length, sc.vehicle.width);
    let gap = signed_clearance(&ego_rect, &ob.polygon());
    let closing = match &ob.motion {
        corridor_planner::scenario::Motion::Scripted { poses } => (ob.pose.position.x - poses[0].x) / poses[0].t,
        _ => f64::NAN,
    };
    if (gap - INTRUSION_GAP).abs() > 1e-9 || (closing - INTRUSION_CLOSING).abs() > 1e-9 {
        return Err(format!("intrusion geometry: gap {gap} closing {closing}"));
    }
    let trace = simulate(&sc, &SimOptions::default());
    let first = trace.records.iter().position(|r| r.guardian_level == GuardianLevel::EmergencyStop);
    let applied_override = first.is_some_and(|i| trace.records[i].applied == Provenance::GuardianStop);

    let mut empty_triggers = 0;
    for name in ["empty_straight", "empty_curved"] {
        empty_triggers += simulate(&scenario(name), &SimOptions::default()).guardian_triggers();
    }

    let cfg = sc.config.guardian.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut violations = 0;
    let draw = |rng: &mut ChaCha8Rng, scale: f64| -> f64 {
        match rng.gen_range(0..10) {
            0 => f64::INFINITY,
            1 => 0.0,
            _ => rng.gen_range(-0.5..scale),
        }
    };
    for _ in 0..SEVERITY_SAMPLES {
        let (c, t) = (draw(&mut rng, 2.0), draw(&mut rng, 5.0));
        // a pair that is no safer in both coordinates
        let c2 = if c.is_finite() { c - rng.gen_range(0.0..1.0) } else { draw(&mut rng, 2.0) };
        let t2 = if t.is_finite() { t - rng.gen_range(0.0..2.0) } else { draw(&mut rng, 5.0) };
        if severity(c2, t2, &cfg) < severity(c, t, &cfg) {
            violations += 1;
        }
    }
    check(
        first.is_some_and(|i| i <= INTRUSION_MAX_CYCLES) && applied_override && empty_triggers == 0 && violations == 0,
        format!(
            "intrusion emergency_stop at cycle {first:?} (<= {INTRUSION_MAX_CYCLES}), override applied {applied_override}; empty-road triggers {empty_triggers}; monotonicity violations {violations}/{SEVERITY_SAMPLES}"
        ),
    )
}

fn fuzz() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let opts = SimOptions {
        max_cycles: FUZZ_CYCLES,
        keep_trajectories: true,
        ..SimOptions::default()
    };
    let mut loaded = 0;
    let mut rejected = 0;
    let mut panics = Vec::new();
    let mut missing = 0;
    let mut unlabeled = 0;
    let mut non_nominal = 0;
    let mut index = 0;
    while loaded < FUZZ_SCENARIOS {
        let text = fuzz_scenario(&mut rng, index).to_string();
        index += 1;
        let result = catch_unwind(AssertUnwindSafe(|| {
            let Ok(sc) = load_scenario(&text) else { return None };
            let first = plan_cycle(&sc, None);
            Some((first, simulate(&sc, &opts), sc.config.speed.grid_count))
        }));
        match result {
            Err(_) => {
                panics.push(index - 1);
                loaded += 1;
            }
            Ok(None) => rejected += 1,
            Ok(Some((first, trace, grid))) => {
                loaded += 1;
                let usable = |t: &corridor_planner::planner::Trajectory| {
                    t.samples.len() == grid && t.samples.iter().all(|s| s.position.is_finite() && s.speed.is_finite())
                };
                if !usable(&first) || (!first.is_nominal() && first.diagnostics.failure.is_none()) {
                    missing += usize::from(!usable(&first));
                    unlabeled += usize::from(usable(&first));
                }
                for r in &trace.records {
                    if !r.trajectory.as_ref().is_some_and(usable) {
                        missing += 1;
                    }
                    if r.applied != Provenance::Nominal || r.planned != Provenance::Nominal {
                        non_nominal += 1;
                        let planner_ok = r.planned == Provenance::Nominal
                            || r.failure.as_ref().is_some_and(|f| !f.phase.is_empty() && !f.kind.is_empty());
                        let guardian_ok = r.applied == r.planned || r.guardian_reason.is_some();
                        if !(planner_ok && guardian_ok) {
                            unlabeled += 1;
                        }
                    }
                }
            }
        }
        if index > 10 * FUZZ_SCENARIOS {
            break;
        }
    }
    check(
        loaded >= FUZZ_SCENARIOS && panics.is_empty() && missing == 0 && unlabeled == 0,
        format!(
            "{loaded} scenarios ({rejected} rejected at load): panics {panics:?}, cycles without a trajectory {missing}, {non_nominal} non-nominal cycles of which unlabeled {unlabeled}"
        ),
    )
}

fn main() {
    // the fuzz suite may trip internal assertions; keep their output short
    std::panic::set_hook(Box::new(|info| eprintln!("panic: {info}")));
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("timing", timing),
        ("objective fidelity", objective_fidelity),
        ("qp soundness", qp_soundness),
        ("dp oracle", dp_oracle),
        ("collision freedom", collision_freedom),
        ("empty road", empty_road),
        ("mirror and determinism", mirror_and_determinism),
        ("guardian", guardian),
        ("fallback totality", fuzz),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("criterion {} {name}: PASS ({d}) [{secs:.1} s]", k + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({d}) [{secs:.1} s]", k + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
