//! Low-level safety monitor. Independent of the planner: it only looks at
//! the ego state, the obstacles as they are now, and the trajectory about
//! to be applied.

use serde::Serialize;

use crate::config::{GuardianConfig, PlannerConfig};
use crate::geometry::{Polygon, ReferenceLine, Vec2};
use crate::planner::{brake_along, scale_speed, Diagnostics, PlanArtifacts, Provenance, Trajectory};
use crate::prediction::advance_obstacle;
use crate::scenario::{EgoState, Obstacle, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardianLevel {
    Ok,
    Slowdown,
    EmergencyStop,
}

impl GuardianLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            GuardianLevel::Ok => "ok",
            GuardianLevel::Slowdown => "slowdown",
            GuardianLevel::EmergencyStop => "emergency_stop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuardianReason {
    /// One of `clearance`, `ttc`, `deadline`, `fallback_streak`.
    pub trigger: String,
    pub obstacle_id: Option<String>,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuardianVerdict {
    pub level: GuardianLevel,
    pub reason: Option<GuardianReason>,
    /// Present exactly when `level` is not `Ok`.
    pub override_trajectory: Option<Trajectory>,
}

impl GuardianVerdict {
    pub fn ok() -> Self {
        Self {
            level: GuardianLevel::Ok,
            reason: None,
            override_trajectory: None,
        }
    }
}

/// An obstacle as the guardian sees it this instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleState {
    pub id: String,
    pub polygon: Polygon,
    pub velocity: Vec2,
}

const VELOCITY_PROBE: f64 = 1e-3;

impl ObstacleState {
    /// Current polygon and velocity, differentiated over a short step of
    /// the obstacle's own motion.
    pub fn observe(obstacle: &Obstacle, line: &ReferenceLine, cfg: &PlannerConfig) -> Self {
        let next = advance_obstacle(obstacle, line, VELOCITY_PROBE, &cfg.prediction);
        Self {
            id: obstacle.id.clone(),
            polygon: obstacle.polygon(),
            velocity: (next.pose.position - obstacle.pose.position) * (1.0 / VELOCITY_PROBE),
        }
    }
}

/// Level implied by one obstacle's clearance and time to collision.
pub fn severity(clearance: f64, ttc: f64, cfg: &GuardianConfig) -> GuardianLevel {
    if clearance < cfg.d_emerg || ttc < cfg.ttc_emerg {
        GuardianLevel::EmergencyStop
    } else if ttc < cfg.ttc_slow {
        GuardianLevel::Slowdown
    } else {
        GuardianLevel::Ok
    }
}

/// Clearance and TTC of one obstacle against the ego rectangle.
pub fn measure(ego: &EgoState, vehicle: &VehicleParams, obstacle: &ObstacleState, eps: f64) -> (f64, f64) {
    let body = vehicle.footprint().transformed(ego.position, ego.heading);
    let (clearance, dir) = body.separation(&obstacle.polygon);
    let ego_v = Vec2::from_angle(ego.heading) * ego.speed;
    let closing = (ego_v - obstacle.velocity).dot(dir);
    let ttc = if closing > 0.0 {
        clearance / closing.max(eps)
    } else {
        f64::INFINITY
    };
    (clearance, ttc)
}

/// Proximity and TTC rules against every obstacle; the most severe trigger
/// wins, ties broken by the smallest TTC.
pub fn check(
    ego: &EgoState,
    obstacles: &[ObstacleState],
    planned: &Trajectory,
    vehicle: &VehicleParams,
    cfg: &PlannerConfig,
) -> GuardianVerdict {
    let g = &cfg.guardian;
    let mut worst: Option<(GuardianLevel, f64, GuardianReason)> = None;
    for ob in obstacles {
        let (clearance, ttc) = measure(ego, vehicle, ob, g.closing_eps);
        let level = severity(clearance, ttc, g);
        if level == GuardianLevel::Ok {
            continue;
        }
        let reason = if clearance < g.d_emerg {
            GuardianReason {
                trigger: "clearance".into(),
                obstacle_id: Some(ob.id.clone()),
                value: clearance,
                threshold: g.d_emerg,
            }
        } else {
            GuardianReason {
                trigger: "ttc".into(),
                obstacle_id: Some(ob.id.clone()),
                value: ttc,
                threshold: if level == GuardianLevel::EmergencyStop { g.ttc_emerg } else { g.ttc_slow },
            }
        };
        let better = match &worst {
            None => true,
            Some((l, t, _)) => level > *l || (level == *l && ttc < *t),
        };
        if better {
            worst = Some((level, ttc, reason));
        }
    }
    match worst {
        None => GuardianVerdict::ok(),
        Some((level, _, reason)) => GuardianVerdict {
            level,
            reason: Some(reason),
            override_trajectory: Some(override_for(level, ego, planned, vehicle, cfg)),
        },
    }
}

/// Override trajectory for a non-ok level: halve the planned speeds for a
/// slowdown, brake at full deceleration along the plan for an emergency.
pub fn override_for(
    level: GuardianLevel,
    ego: &EgoState,
    planned: &Trajectory,
    vehicle: &VehicleParams,
    cfg: &PlannerConfig,
) -> Trajectory {
    let (samples, provenance) = match level {
        GuardianLevel::Slowdown => (scale_speed(&planned.samples, ego, 0.5, vehicle), Provenance::GuardianSlowdown),
        _ => (
            brake_along(Some(&planned.samples), ego, vehicle.max_decel, cfg.speed.grid_count, cfg.speed_dt()),
            Provenance::GuardianStop,
        ),
    };
    Trajectory {
        samples,
        provenance,
        diagnostics: Diagnostics::default(),
        artifacts: PlanArtifacts::default(),
        warm: None,
    }
}

/// Deadline and repeated-fallback watchdog.
#[derive(Debug, Clone, Default)]
pub struct HealthMonitor {
    consecutive_fallbacks: usize,
}

pub const SLOWDOWN_STREAK: usize = 2;
pub const EMERGENCY_STREAK: usize = 4;

impl HealthMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn consecutive_fallbacks(&self) -> usize {
        self.consecutive_fallbacks
    }

    /// Update with one finished cycle. `cycle_time` is the planner wall
    /// time in seconds.
    pub fn observe(
        &mut self,
        ego: &EgoState,
        planned: &Trajectory,
        cycle_time: f64,
        vehicle: &VehicleParams,
        cfg: &PlannerConfig,
    ) -> GuardianVerdict {
        if planned.provenance == Provenance::FallbackStop {
            self.consecutive_fallbacks += 1;
        } else {
            self.consecutive_fallbacks = 0;
        }
        let streak = self.consecutive_fallbacks;
        let (level, reason) = if streak >= EMERGENCY_STREAK {
            (GuardianLevel::EmergencyStop, streak_reason(streak, EMERGENCY_STREAK))
        } else if streak >= SLOWDOWN_STREAK {
            (GuardianLevel::Slowdown, streak_reason(streak, SLOWDOWN_STREAK))
        } else if cycle_time > cfg.guardian.deadline {
            (
                GuardianLevel::Slowdown,
                GuardianReason {
                    trigger: "deadline".into(),
                    obstacle_id: None,
                    value: cycle_time,
                    threshold: cfg.guardian.deadline,
                },
            )
        } else {
            return GuardianVerdict::ok();
        };
        GuardianVerdict {
            level,
            reason: Some(reason),
            override_trajectory: Some(override_for(level, ego, planned, vehicle, cfg)),
        }
    }
}

fn streak_reason(streak: usize, threshold: usize) -> GuardianReason {
    GuardianReason {
        trigger: "fallback_streak".into(),
        obstacle_id: None,
        value: streak as f64,
        threshold: threshold as f64,
    }
}

/// The stricter of two verdicts; the first wins ties.
pub fn combine(a: GuardianVerdict, b: GuardianVerdict) -> GuardianVerdict {
    if b.level > a.level {
        b
    } else {
        a
    }
}
