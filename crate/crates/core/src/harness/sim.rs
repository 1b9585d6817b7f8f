use std::fmt;

use serde::Serialize;

use crate::guardian::{check, combine, GuardianLevel, GuardianReason, HealthMonitor, ObstacleState};
use crate::planner::{plan_cycle, FailureReason, PhaseTimings, Provenance, Trajectory};
use crate::prediction::advance_obstacle;
use crate::scenario::{EgoState, Obstacle, Scenario};

pub const SUBSTEPS: usize = 10;
pub const GOAL_TOLERANCE: f64 = 0.5;
pub const GOAL_SPEED: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    GoalReached,
    Stopped,
    Collision,
    Timeout,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::GoalReached => "goal_reached",
            Outcome::Stopped => "stopped",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Fallback { phase: String, reason: String },
    Guardian { level: GuardianLevel, trigger: String, obstacle_id: Option<String> },
    Collision { obstacle_id: String },
    /// Collision while a planner-certified nominal trajectory was applied.
    ModelGap { obstacle_id: String },
    GoalReached,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Fallback { phase, reason } => write!(f, "fallback:{phase}:{reason}"),
            Event::Guardian { level, trigger, obstacle_id } => {
                write!(f, "guardian:{}:{trigger}", level.as_str())?;
                if let Some(id) = obstacle_id {
                    write!(f, ":{id}")?;
                }
                Ok(())
            }
            Event::Collision { obstacle_id } => write!(f, "collision:{obstacle_id}"),
            Event::ModelGap { obstacle_id } => write!(f, "model_gap:{obstacle_id}"),
            Event::GoalReached => f.write_str("goal_reached"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub max_cycles: usize,
    pub seed: u64,
    /// Feed measured planner time to the deadline rule. Off by default so
    /// traces do not depend on machine load.
    pub enforce_deadline: bool,
    /// Stop early once the ego has been at rest this many cycles.
    pub stall_cycles: usize,
    /// Keep every planner output in the trace.
    pub keep_trajectories: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            max_cycles: 1200,
            seed: 0,
            enforce_deadline: false,
            stall_cycles: 100,
            keep_trajectories: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub cycle: usize,
    pub t: f64,
    /// Ego state at the start of the cycle.
    pub ego: EgoState,
    /// Provenance of the planner output.
    pub planned: Provenance,
    /// Provenance of the trajectory actually driven.
    pub applied: Provenance,
    pub guardian_level: GuardianLevel,
    pub guardian_reason: Option<GuardianReason>,
    pub failure: Option<FailureReason>,
    pub timings: PhaseTimings,
    pub path_iterations: Option<usize>,
    pub speed_iterations: Option<usize>,
    pub yield_decisions: usize,
    pub events: Vec<Event>,
    pub trajectory: Option<Trajectory>,
    /// Obstacles at the start of the cycle (kept with trajectories).
    pub obstacles: Option<Vec<Obstacle>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub scenario: String,
    pub seed: u64,
    pub replan_period: f64,
    pub records: Vec<CycleRecord>,
    pub outcome: Outcome,
    pub final_ego: EgoState,
}

impl SimTrace {
    pub fn count(&self, pred: impl Fn(&Event) -> bool) -> usize {
        self.records.iter().flat_map(|r| r.events.iter()).filter(|e| pred(e)).count()
    }

    pub fn fallbacks(&self) -> usize {
        self.records.iter().filter(|r| r.planned == Provenance::FallbackStop).count()
    }

    pub fn guardian_triggers(&self) -> usize {
        self.records.iter().filter(|r| r.guardian_level != GuardianLevel::Ok).count()
    }

    pub fn model_gaps(&self) -> usize {
        self.count(|e| matches!(e, Event::ModelGap { .. }))
    }

    pub fn collisions(&self) -> usize {
        self.count(|e| matches!(e, Event::Collision { .. } | Event::ModelGap { .. }))
    }
}

/// Scenario with the ego and obstacles replaced.
fn with_state(base: &Scenario, ego: EgoState, obstacles: Vec<Obstacle>) -> Scenario {
    Scenario {
        ego,
        obstacles,
        ..base.clone()
    }
}

fn reached_goal(scenario: &Scenario, ego: &EgoState) -> bool {
    let line = &scenario.reference_line;
    let Ok(f) = line.extended(GOAL_TOLERANCE + 1.0).to_frenet(ego.position) else {
        return false;
    };
    (f.s - scenario.goal_s).abs() < GOAL_TOLERANCE && (scenario.through_goal || ego.speed < GOAL_SPEED)
}

/// Closed-loop run: obstacles move by their ground truth, the ego follows
/// the applied trajectory exactly.
pub fn simulate(scenario: &Scenario, opts: &SimOptions) -> SimTrace {
    let cfg = &scenario.config;
    let period = cfg.planner.replan_period;
    let vehicle = scenario.vehicle.clone();
    let body = vehicle.footprint();
    let mut ego = scenario.ego;
    let mut obstacles = scenario.obstacles.clone();
    let mut previous: Option<Trajectory> = None;
    let mut health = HealthMonitor::new();
    let mut records = Vec::new();
    let mut outcome = Outcome::Timeout;
    let mut still = 0usize;

    for cycle in 0..opts.max_cycles {
        let t = cycle as f64 * period;
        let current = with_state(scenario, ego, obstacles.clone());
        let planned = plan_cycle(&current, previous.as_ref());
        let mut events = Vec::new();
        if let Some(f) = &planned.diagnostics.failure {
            events.push(Event::Fallback {
                phase: f.phase.clone(),
                reason: f.kind.clone(),
            });
        }

        let seen: Vec<ObstacleState> = obstacles
            .iter()
            .map(|o| ObstacleState::observe(o, &scenario.reference_line, cfg))
            .collect();
        let cycle_time = if opts.enforce_deadline {
            planned.diagnostics.timings.total
        } else {
            0.0
        };
        let verdict = combine(
            check(&ego, &seen, &planned, &vehicle, cfg),
            health.observe(&ego, &planned, cycle_time, &vehicle, cfg),
        );
        if let Some(r) = &verdict.reason {
            events.push(Event::Guardian {
                level: verdict.level,
                trigger: r.trigger.clone(),
                obstacle_id: r.obstacle_id.clone(),
            });
        }
        let applied = verdict.override_trajectory.as_ref().unwrap_or(&planned);

        // advance the world in substeps, checking the exact footprints
        let mut collided = None;
        for k in 1..=SUBSTEPS {
            let dt = period * k as f64 / SUBSTEPS as f64;
            let s = applied.sample_at(dt);
            let ego_poly = body.transformed(s.position, s.heading);
            for ob in &obstacles {
                let moved = advance_obstacle(ob, &scenario.reference_line, dt, &cfg.prediction);
                if ego_poly.intersects(&moved.polygon()) {
                    collided = Some(ob.id.clone());
                    break;
                }
            }
            if collided.is_some() {
                break;
            }
        }
        let next = applied.sample_at(period);
        let record_obstacles = opts.keep_trajectories.then(|| obstacles.clone());
        let new_ego = EgoState {
            position: next.position,
            heading: next.heading,
            speed: next.speed.max(0.0),
            accel: next.accel,
            curvature: next.curvature,
        };
        obstacles = obstacles
            .iter()
            .map(|o| advance_obstacle(o, &scenario.reference_line, period, &cfg.prediction))
            .collect();

        let mut done = None;
        if let Some(id) = collided {
            events.push(if applied.is_nominal() {
                Event::ModelGap { obstacle_id: id }
            } else {
                Event::Collision { obstacle_id: id }
            });
            done = Some(Outcome::Collision);
        } else if reached_goal(scenario, &new_ego) {
            events.push(Event::GoalReached);
            done = Some(Outcome::GoalReached);
        }
        if new_ego.speed < 1e-3 && new_ego.position.distance(ego.position) < 1e-3 {
            still += 1;
        } else {
            still = 0;
        }
        if done.is_none() && opts.stall_cycles > 0 && still >= opts.stall_cycles {
            done = Some(Outcome::Stopped);
        }

        records.push(CycleRecord {
            cycle,
            t,
            ego,
            planned: planned.provenance,
            applied: applied.provenance,
            guardian_level: verdict.level,
            guardian_reason: verdict.reason.clone(),
            failure: planned.diagnostics.failure.clone(),
            timings: planned.diagnostics.timings,
            path_iterations: planned.diagnostics.path_solver.as_ref().map(|r| r.iterations),
            speed_iterations: planned.diagnostics.speed_solver.as_ref().map(|r| r.iterations),
            yield_decisions: planned
                .diagnostics
                .labels
                .values()
                .filter(|l| **l == crate::decision::DecisionLabel::Yield)
                .count(),
            events,
            trajectory: opts.keep_trajectories.then(|| planned.clone().without_warm_start()),
            obstacles: record_obstacles,
        });
        ego = new_ego;
        previous = Some(planned);
        if let Some(o) = done {
            outcome = o;
            break;
        }
    }
    if outcome == Outcome::Timeout && ego.speed < GOAL_SPEED {
        outcome = Outcome::Stopped;
    }
    SimTrace {
        scenario: scenario.name.clone().unwrap_or_else(|| "scenario".into()),
        seed: opts.seed,
        replan_period: period,
        records,
        outcome,
        final_ego: ego,
    }
}
