//! One planning cycle: predict, decide, path QP, s-t bounds, speed QP,
//! and the Cartesian combination. Every failure degrades to a stop.

mod fallback;
pub mod reference;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::decision::{
    build_lattice, decide, extract_st_constraints, extract_tunnel, obstacle_views, CoarseTrajectory, DecisionContext,
    DecisionError, DecisionLabel, Occupancy, PlannedPath, StConstraintSet, Tunnel,
};
use crate::geometry::{ReferenceLine, Vec2};
use crate::prediction::{predict, PredictedTrajectory};
use crate::qp::constraints::SpeedStart;
use crate::qp::{
    build_objective, build_path_constraints, build_speed_constraints, solve_qp, CircleCover, History, QpProblem,
    QpSolution, QpStatus, ReferenceProfile, ReferenceProfileSet, SolverSettings, WarmStart,
};
use crate::scenario::Scenario;

pub use fallback::{brake_along, fallback_stop, scale_speed};
use reference::{track_speed, RampLimits, SpeedReference};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Nominal,
    FallbackStop,
    GuardianSlowdown,
    GuardianStop,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Nominal => "nominal",
            Provenance::FallbackStop => "fallback_stop",
            Provenance::GuardianSlowdown => "guardian_slowdown",
            Provenance::GuardianStop => "guardian_stop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Vec2,
    pub heading: f64,
    pub curvature: f64,
    pub speed: f64,
    pub accel: f64,
}

/// Wall time per phase, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PhaseTimings {
    pub predict: f64,
    pub decision: f64,
    pub path_qp: f64,
    pub st: f64,
    pub speed_qp: f64,
    pub combine: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverReport {
    pub status: String,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub solve_time: f64,
    pub polished: bool,
}

impl SolverReport {
    fn of(sol: &QpSolution) -> Self {
        Self {
            status: status_name(sol.status).to_string(),
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            objective: sol.objective_value,
            solve_time: sol.solve_time,
            polished: sol.polished,
        }
    }
}

pub fn status_name(s: QpStatus) -> &'static str {
    match s {
        QpStatus::Optimal => "optimal",
        QpStatus::MaxIter => "max_iter",
        QpStatus::Infeasible => "infeasible",
    }
}

/// Why a cycle did not produce a nominal trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureReason {
    /// Pipeline phase that failed.
    pub phase: String,
    /// Error class, e.g. `TunnelCollapse` or `SolverMaxIter`.
    pub kind: String,
    pub message: String,
}

impl FailureReason {
    pub fn new(phase: &str, kind: &str, message: impl Into<String>) -> Self {
        Self {
            phase: phase.to_string(),
            kind: kind.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    pub timings: PhaseTimings,
    pub labels: BTreeMap<String, DecisionLabel>,
    pub path_solver: Option<SolverReport>,
    pub speed_solver: Option<SolverReport>,
    pub failure: Option<FailureReason>,
    pub curvature_clamped: bool,
    pub coarse_cost: Option<f64>,
    pub stop_demand: bool,
}

/// Intermediate results kept for inspection and plotting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanArtifacts {
    pub coarse: Option<CoarseTrajectory>,
    pub tunnel: Option<Tunnel>,
    pub path: Option<PlannedPath>,
    pub st: Option<StConstraintSet>,
    pub occupancy: Vec<Occupancy>,
    /// Speed QP grid values s(t_i).
    pub stations: Vec<f64>,
    pub predictions: Vec<PredictedTrajectory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub provenance: Provenance,
    pub diagnostics: Diagnostics,
    pub artifacts: PlanArtifacts,
    pub(crate) warm: Option<(WarmStart, WarmStart)>,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        if self.samples.len() > 1 {
            self.samples[1].t - self.samples[0].t
        } else {
            0.0
        }
    }

    /// State at time t, linear between samples and held past the end.
    pub fn sample_at(&self, t: f64) -> TrajectorySample {
        let s = &self.samples;
        if t <= s[0].t || s.len() == 1 {
            return TrajectorySample { t, ..s[0] };
        }
        for w in s.windows(2) {
            if t <= w[1].t {
                let u = (t - w[0].t) / (w[1].t - w[0].t);
                return TrajectorySample {
                    t,
                    position: w[0].position.lerp(w[1].position, u),
                    heading: crate::geometry::lerp_angle(w[0].heading, w[1].heading, u),
                    curvature: w[0].curvature + u * (w[1].curvature - w[0].curvature),
                    speed: w[0].speed + u * (w[1].speed - w[0].speed),
                    accel: w[0].accel + u * (w[1].accel - w[0].accel),
                };
            }
        }
        let last = s[s.len() - 1];
        TrajectorySample {
            t,
            speed: 0.0_f64.max(last.speed),
            ..last
        }
    }

    pub fn is_nominal(&self) -> bool {
        self.provenance == Provenance::Nominal
    }

    /// Same trajectory without solver warm-start data.
    pub fn without_warm_start(mut self) -> Self {
        self.warm = None;
        self
    }
}

/// Curvature of the offset curve l(s) in the frame of a reference line
/// with curvature `kr`.
pub fn frenet_curvature(kr: f64, l: f64, dl: f64, ddl: f64) -> f64 {
    let one = (1.0 - kr * l).max(1e-3);
    let tan = dl / one;
    let cos = 1.0 / (1.0 + tan * tan).sqrt();
    ((ddl + kr * dl * tan) * cos * cos / one + kr) * cos / one
}

fn path_second_difference(path: &PlannedPath, history: &History, s: f64) -> f64 {
    let ds = path.stations[1] - path.stations[0];
    let n = path.l.len();
    let i = (((s - path.stations[0]) / ds).round().max(0.0) as usize).min(n - 1);
    let at = |k: isize| -> f64 {
        if k < 0 {
            history.values[(-k - 1) as usize]
        } else {
            path.l[(k as usize).min(n - 1)]
        }
    };
    let i = i as isize;
    (at(i + 1) - 2.0 * at(i) + at(i - 1)) / (ds * ds)
}

/// Curvature of the planned path at station s.
pub fn path_curvature(line: &ReferenceLine, path: &PlannedPath, history: &History, s: f64) -> f64 {
    frenet_curvature(
        line.curvature_at(s),
        path.l_at(s),
        path.slope_at(s),
        path_second_difference(path, history, s),
    )
}

/// Reference line used by the planner: the scenario line extended straight
/// so the fixed path grid always fits.
pub fn planning_line(scenario: &Scenario) -> ReferenceLine {
    let cfg = &scenario.config.path;
    scenario.reference_line.extended(cfg.horizon + 10.0)
}

pub fn predict_all(scenario: &Scenario) -> Vec<PredictedTrajectory> {
    let cfg = &scenario.config;
    scenario
        .obstacles
        .iter()
        .map(|o| predict(o, &scenario.reference_line, cfg.speed.horizon, cfg.speed_dt(), &cfg.prediction))
        .collect()
}

struct Failure {
    reason: FailureReason,
}

impl From<DecisionError> for Failure {
    fn from(e: DecisionError) -> Self {
        Failure {
            reason: FailureReason::new("decision", e.kind(), e.to_string()),
        }
    }
}

/// Plan one cycle. Warm-starts the solvers from `previous` when its grid
/// shapes match.
pub fn plan_cycle(scenario: &Scenario, previous: Option<&Trajectory>) -> Trajectory {
    let start = Instant::now();
    let mut diag = Diagnostics::default();
    let mut art = PlanArtifacts::default();
    let outcome = run_pipeline(scenario, previous, &mut diag, &mut art);
    let mut traj = match outcome {
        Ok(t) => t,
        Err(f) => {
            log::debug!("fallback: {} {}: {}", f.reason.phase, f.reason.kind, f.reason.message);
            diag.failure = Some(f.reason);
            fallback_stop(previous, &scenario.ego, &scenario.vehicle, &scenario.config)
        }
    };
    if traj.provenance == Provenance::FallbackStop && diag.failure.is_none() {
        diag.failure = Some(FailureReason::new("planner", "Unknown", "fallback without a recorded cause"));
    }
    diag.timings.total = start.elapsed().as_secs_f64();
    traj.diagnostics = diag;
    traj.artifacts = art;
    traj
}

fn solver_settings(scenario: &Scenario) -> SolverSettings {
    let c = &scenario.config.solver;
    SolverSettings::with_tolerances(c.tol_prim, c.tol_dual, c.max_iter)
}

fn check_solution(phase: &str, sol: &QpSolution) -> Result<(), Failure> {
    match sol.status {
        QpStatus::Optimal => Ok(()),
        QpStatus::MaxIter => Err(Failure {
            reason: FailureReason::new(
                phase,
                "SolverMaxIter",
                format!("no convergence in {} iterations (primal {:.2e}, dual {:.2e})", sol.iterations, sol.primal_residual, sol.dual_residual),
            ),
        }),
        QpStatus::Infeasible => Err(Failure {
            reason: FailureReason::new(phase, "SolverInfeasible", "infeasibility certificate found"),
        }),
    }
}

fn run_pipeline(
    scenario: &Scenario,
    previous: Option<&Trajectory>,
    diag: &mut Diagnostics,
    art: &mut PlanArtifacts,
) -> Result<Trajectory, Failure> {
    let cfg = &scenario.config;
    let vehicle = &scenario.vehicle;
    let settings = solver_settings(scenario);
    let line = planning_line(scenario);

    let t0 = Instant::now();
    let preds = predict_all(scenario);
    diag.timings.predict = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let ctx = DecisionContext::new(scenario, &line)?;
    let views = obstacle_views(&preds, &ctx);
    let lattice = build_lattice(&ctx)?;
    let coarse = decide(&lattice, &views, &ctx)?;
    diag.labels = coarse.decisions.clone();
    diag.coarse_cost = Some(coarse.total_cost);
    art.coarse = Some(coarse.clone());
    let tunnel = extract_tunnel(&coarse, &views, &ctx)?;
    art.tunnel = Some(tunnel.clone());
    diag.timings.decision = t0.elapsed().as_secs_f64();

    // path QP over l(s)
    let t0 = Instant::now();
    let stations = ctx.path_stations();
    let n = stations.len();
    let ds = ctx.path_spacing();
    let ddl0 = scenario.ego.curvature - line.curvature_at(ctx.ego.s);
    let hist = History::from_state(ctx.ego.l, ctx.ego.dl_ds, ddl0, 0.0, ds);
    let coarse_l: Vec<f64> = stations.iter().map(|&s| coarse.l_at(s)).collect();
    let pc = &cfg.path;
    let profiles = ReferenceProfileSet::new(vec![
        ReferenceProfile::zeros(n).with_order(0, coarse_l, pc.w_coarse),
        ReferenceProfile::zeros(n)
            .with_order(1, vec![0.0; n], pc.w_dl)
            .with_order(2, vec![0.0; n], pc.w_ddl)
            .with_order(3, vec![0.0; n], pc.w_dddl),
    ]);
    let objective = build_objective(&profiles, n, ds, &hist).map_err(|e| Failure {
        reason: FailureReason::new("path_qp", "Objective", e.to_string()),
    })?;
    let cover = CircleCover::for_vehicle(vehicle);
    let rows = build_path_constraints(&tunnel, vehicle, &cover, ctx.ego.l, &hist, ds, pc.max_heading).map_err(|e| Failure {
        reason: FailureReason::new("path_qp", "InfeasibleBounds", e.to_string()),
    })?;
    let problem = QpProblem::new(objective, rows);
    let warm_path = previous.and_then(|p| p.warm.as_ref()).map(|w| &w.0);
    let path_sol = solve_qp(&problem, &settings, warm_path);
    diag.path_solver = Some(SolverReport::of(&path_sol));
    diag.timings.path_qp = t0.elapsed().as_secs_f64();
    check_solution("path_qp", &path_sol)?;
    let path_warm = path_sol.warm_start(&problem);
    let path = PlannedPath {
        stations: stations.clone(),
        l: path_sol.y.clone(),
    };
    art.path = Some(path.clone());

    // s-t bounds along the solved path
    let t0 = Instant::now();
    let ns = cfg.speed.grid_count;
    let dt = cfg.speed_dt();
    let times: Vec<f64> = (0..ns).map(|i| i as f64 * dt).collect();
    let (st, occupancy) = extract_st_constraints(&coarse, &path, &preds, &ctx, &times)?;
    diag.stop_demand = st.stop_demand;
    art.st = Some(st.clone());
    art.occupancy = occupancy;
    art.predictions = preds;
    diag.timings.st = t0.elapsed().as_secs_f64();

    // speed QP over s(t)
    let t0 = Instant::now();
    let v_target = cfg.planner.v_target.min(cfg.planner.speed_limit).min(vehicle.max_speed);
    let start = SpeedStart {
        s: ctx.ego.s,
        v: ctx.ego_speed,
        a: ctx.ego_accel,
    };
    let curv_grid: Vec<f64> = stations.iter().map(|&s| path_curvature(&line, &path, &hist, s)).collect();
    let curv_at = |s: f64| -> f64 {
        let i = (((s - stations[0]) / ds).round().max(0.0) as usize).min(n - 1);
        curv_grid[i]
    };
    let a_lat = cfg.planner.a_lat_max;
    let stop_decel = 0.8 * cfg.planner.comfort_decel.min(vehicle.max_decel);
    let limits = RampLimits {
        max_accel: vehicle.max_accel,
        max_decel: cfg.planner.comfort_decel.min(vehicle.max_decel),
        max_jerk: vehicle.max_jerk,
    };
    let horizon = times[ns - 1];
    let sref = track_speed(start.s, start.v, start.a, horizon, limits, |t, s, v, a| {
        let j = ((t / dt).ceil() as usize).min(ns - 1);
        // distance covered while the deceleration ramps in at the jerk limit
        let onset = v * (a.max(0.0) + stop_decel) / vehicle.max_jerk;
        let room = (st.s_upper[j] - s - onset).max(0.0);
        let k = curv_at(s).abs().max(1e-6);
        v_target.min((2.0 * stop_decel * room).sqrt()).min((a_lat / k).sqrt())
    });
    // solved relative to the ego station so the iterates start near the answer
    let origin = start.s;
    let st_rel = StConstraintSet {
        times: st.times.clone(),
        s_lower: st.s_lower.iter().map(|v| v - origin).collect(),
        s_upper: st.s_upper.iter().map(|v| v - origin).collect(),
        stop_demand: st.stop_demand,
    };
    let start_rel = SpeedStart { s: 0.0, ..start };
    let speed_profiles = speed_profiles(&sref, origin, &st_rel, &times, cfg);
    let shist = start_rel.history(vehicle, dt);
    let objective = build_objective(&speed_profiles, ns, dt, &shist).map_err(|e| Failure {
        reason: FailureReason::new("speed_qp", "Objective", e.to_string()),
    })?;
    let nominal_curv: Vec<f64> = times.iter().map(|&t| curv_at(sref.s_at(t))).collect();
    let rows = build_speed_constraints(&st_rel, vehicle, &start_rel, &nominal_curv, dt, a_lat).map_err(|e| Failure {
        reason: FailureReason::new("speed_qp", "InfeasibleBounds", e.to_string()),
    })?;
    let problem = QpProblem::new(objective, rows);
    let warm_speed = previous.and_then(|p| p.warm.as_ref()).map(|w| &w.1);
    let speed_sol = solve_qp(&problem, &settings, warm_speed);
    diag.speed_solver = Some(SolverReport::of(&speed_sol));
    diag.timings.speed_qp = t0.elapsed().as_secs_f64();
    check_solution("speed_qp", &speed_sol)?;
    let speed_warm = speed_sol.warm_start(&problem);
    let y: Vec<f64> = speed_sol.y.iter().map(|v| v + origin).collect();
    art.stations = y.clone();
    let shist = History {
        values: shist.values.map(|v| v + origin),
    };

    // combine
    let t0 = Instant::now();
    let d1 = |i: usize| -> f64 {
        let prev = if i == 0 { shist.values[0] } else { y[i - 1] };
        (y[i] - prev) / dt
    };
    let d2 = |i: usize| -> f64 {
        let at = |k: isize| if k < 0 { shist.values[(-k - 1) as usize] } else { y[k as usize] };
        let i = i as isize;
        (at(i) - 2.0 * at(i - 1) + at(i - 2)) / (dt * dt)
    };
    let mut samples = Vec::with_capacity(ns);
    for i in 0..ns {
        let (speed, accel) = if i + 1 < ns {
            (0.5 * (d1(i) + d1(i + 1)), d2(i + 1))
        } else {
            (d1(i) + 0.5 * dt * d2(i), d2(i))
        };
        let s = y[i];
        let (position, heading) = path.pose_at(&line, s);
        let mut curvature = path_curvature(&line, &path, &hist, s);
        if curvature.abs() > vehicle.max_curvature {
            curvature = curvature.clamp(-vehicle.max_curvature, vehicle.max_curvature);
            diag.curvature_clamped = true;
        }
        samples.push(TrajectorySample {
            t: times[i],
            position,
            heading,
            curvature,
            speed: speed.clamp(0.0, vehicle.max_speed),
            accel: accel.clamp(-vehicle.max_decel, vehicle.max_accel),
        });
    }
    diag.timings.combine = t0.elapsed().as_secs_f64();

    Ok(Trajectory {
        samples,
        provenance: Provenance::Nominal,
        diagnostics: Diagnostics::default(),
        artifacts: PlanArtifacts::default(),
        warm: Some((path_warm, speed_warm)),
    })
}

/// Cruise, comfort and (when a stop is needed) stop profiles.
fn speed_profiles(
    sref: &SpeedReference,
    origin: f64,
    st: &StConstraintSet,
    times: &[f64],
    cfg: &crate::config::PlannerConfig,
) -> ReferenceProfileSet {
    let n = times.len();
    let dt = times[1] - times[0];
    let sc = &cfg.speed;
    let s_ref: Vec<f64> = times
        .iter()
        .zip(&st.s_upper)
        .map(|(&t, &up)| (sref.s_at(t) - origin).min(up))
        .collect();
    // backward differences sit half a step behind their grid point
    let v_ref: Vec<f64> = times.iter().map(|&t| sref.v_at((t - 0.5 * dt).max(0.0))).collect();
    let cruise = ReferenceProfile::zeros(n)
        .with_order(0, s_ref.clone(), sc.w_cruise_s)
        .with_order(1, v_ref, sc.w_cruise_v);
    let comfort = ReferenceProfile::zeros(n)
        .with_order(2, vec![0.0; n], sc.w_accel)
        .with_order(3, vec![0.0; n], sc.w_jerk);
    let mut set = vec![cruise, comfort];
    let last = n - 1;
    if st.stop_demand && s_ref[last] >= st.s_upper[last] - 0.5 {
        let mut stop = ReferenceProfile::zeros(n);
        stop.refs[0][last] = st.s_upper[last];
        stop.weights[0][last] = sc.w_stop;
        stop.weights[1][last] = sc.w_stop;
        set.push(stop);
    }
    ReferenceProfileSet::new(set)
}
