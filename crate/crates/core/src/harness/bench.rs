use std::time::Instant;

use serde::Serialize;

use crate::planner::{plan_cycle, Trajectory};
use crate::scenario::Scenario;

/// Budget for the combined path and speed QP solve time at the 99th percentile (s).
pub const QP_P99_BUDGET: f64 = 0.010;
/// Budget for a whole planning cycle at the 99th percentile (s).
pub const CYCLE_P99_BUDGET: f64 = 0.025;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
    pub samples: usize,
}

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            p50: nearest_rank(&v, 50.0),
            p95: nearest_rank(&v, 95.0),
            p99: nearest_rank(&v, 99.0),
            max: v.last().copied().unwrap_or(f64::NAN),
            samples: v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioBench {
    pub scenario: String,
    pub path_qp: Percentiles,
    pub speed_qp: Percentiles,
    pub qp_total: Percentiles,
    pub cycle: Percentiles,
    pub path_iterations: Percentiles,
    pub speed_iterations: Percentiles,
    pub failure_rate: f64,
    /// Every repetition produced the same trajectory.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub repetitions: usize,
    pub warmup: usize,
    pub scenarios: Vec<ScenarioBench>,
    pub path_qp: Percentiles,
    pub speed_qp: Percentiles,
    pub qp_total: Percentiles,
    pub cycle: Percentiles,
    pub failure_rate: f64,
    pub qp_gate_pass: bool,
    pub cycle_gate_pass: bool,
    pub wall_time: f64,
}

#[derive(Debug, Default)]
struct Samples {
    path: Vec<f64>,
    speed: Vec<f64>,
    qp: Vec<f64>,
    cycle: Vec<f64>,
    path_it: Vec<f64>,
    speed_it: Vec<f64>,
    failures: usize,
}

fn same_output(a: &Trajectory, b: &Trajectory) -> bool {
    a.provenance == b.provenance && a.samples == b.samples
}

/// Time cold planning cycles of one scenario.
pub fn bench_scenario(scenario: &Scenario, repetitions: usize, warmup: usize) -> ScenarioBench {
    run_scenario(scenario, repetitions, warmup).0
}

fn run_scenario(sc: &Scenario, repetitions: usize, warmup: usize) -> (ScenarioBench, Samples) {
    for _ in 0..warmup {
        std::hint::black_box(plan_cycle(sc, None));
    }
    let mut s = Samples::default();
    let mut reference: Option<Trajectory> = None;
    let mut deterministic = true;
    for _ in 0..repetitions {
        let traj = plan_cycle(sc, None);
        let d = &traj.diagnostics;
        let path = d.path_solver.as_ref().map_or(0.0, |r| r.solve_time);
        let speed = d.speed_solver.as_ref().map_or(0.0, |r| r.solve_time);
        s.path.push(path);
        s.speed.push(speed);
        s.qp.push(path + speed);
        s.cycle.push(d.timings.total);
        s.path_it.push(d.path_solver.as_ref().map_or(0, |r| r.iterations) as f64);
        s.speed_it.push(d.speed_solver.as_ref().map_or(0, |r| r.iterations) as f64);
        if !traj.is_nominal() {
            s.failures += 1;
        }
        match &reference {
            None => reference = Some(traj),
            Some(r) => deterministic &= same_output(r, &traj),
        }
    }
    let b = ScenarioBench {
        scenario: sc.name.clone().unwrap_or_else(|| "scenario".into()),
        path_qp: Percentiles::of(&s.path),
        speed_qp: Percentiles::of(&s.speed),
        qp_total: Percentiles::of(&s.qp),
        cycle: Percentiles::of(&s.cycle),
        path_iterations: Percentiles::of(&s.path_it),
        speed_iterations: Percentiles::of(&s.speed_it),
        failure_rate: s.failures as f64 / repetitions.max(1) as f64,
        deterministic,
    };
    (b, s)
}

/// Bench every scenario in the given order on `jobs` worker threads and
/// aggregate the raw samples.
pub fn bench(scenarios: &[Scenario], repetitions: usize, warmup: usize, jobs: usize) -> BenchReport {
    let start = Instant::now();
    let run = |sc: &Scenario| run_scenario(sc, repetitions, warmup);
    let results: Vec<(ScenarioBench, Samples)> = if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build();
        match pool {
            Ok(pool) => pool.install(|| scenarios.par_iter().map(run).collect()),
            Err(_) => scenarios.iter().map(run).collect(),
        }
    } else {
        scenarios.iter().map(run).collect()
    };
    let mut all = Samples::default();
    let mut per = Vec::with_capacity(results.len());
    for (b, s) in results {
        all.path.extend(s.path);
        all.speed.extend(s.speed);
        all.qp.extend(s.qp);
        all.cycle.extend(s.cycle);
        all.failures += s.failures;
        per.push(b);
    }
    let qp_total = Percentiles::of(&all.qp);
    let cycle = Percentiles::of(&all.cycle);
    BenchReport {
        repetitions,
        warmup,
        scenarios: per,
        path_qp: Percentiles::of(&all.path),
        speed_qp: Percentiles::of(&all.speed),
        qp_total,
        cycle,
        failure_rate: all.failures as f64 / all.cycle.len().max(1) as f64,
        qp_gate_pass: qp_total.p99 <= QP_P99_BUDGET,
        cycle_gate_pass: cycle.p99 <= CYCLE_P99_BUDGET,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

impl BenchReport {
    /// Plain-text table, one row per scenario plus the aggregate.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<28} {:>10} {:>10} {:>10} {:>10} {:>8} {:>6}\n",
            "scenario", "qp p50 ms", "qp p99 ms", "cyc p50 ms", "cyc p99 ms", "fail %", "det"
        );
        let row = |name: &str, qp: &Percentiles, cyc: &Percentiles, fail: f64, det: &str| {
            format!(
                "{:<28} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>8.1} {:>6}\n",
                name,
                qp.p50 * 1e3,
                qp.p99 * 1e3,
                cyc.p50 * 1e3,
                cyc.p99 * 1e3,
                fail * 100.0,
                det
            )
        };
        for s in &self.scenarios {
            out += &row(&s.scenario, &s.qp_total, &s.cycle, s.failure_rate, if s.deterministic { "yes" } else { "NO" });
        }
        out += &row("ALL", &self.qp_total, &self.cycle, self.failure_rate, "");
        out += &format!(
            "qp p99 {:.3} ms (budget {:.0} ms): {}; cycle p99 {:.3} ms (budget {:.0} ms): {}\n",
            self.qp_total.p99 * 1e3,
            QP_P99_BUDGET * 1e3,
            if self.qp_gate_pass { "PASS" } else { "FAIL" },
            self.cycle.p99 * 1e3,
            CYCLE_P99_BUDGET * 1e3,
            if self.cycle_gate_pass { "PASS" } else { "FAIL" },
        );
        out
    }
}
