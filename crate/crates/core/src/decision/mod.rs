//! Decision layer: lattice search over the s-l sheet, obstacle labels,
//! the lateral tunnel and s-t bounds.

mod dp;
mod lattice;
mod st;
mod tunnel;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::config::PlannerConfig;
use crate::geometry::{normalize_angle, FrenetPose, Polygon, ReferenceLine, Vec2};
use crate::prediction::PredictedTrajectory;
use crate::qp::CircleCover;
use crate::scenario::{Scenario, VehicleParams};

pub use dp::{dp_search, DpCostModel, DpResult, RiskBox};
pub use lattice::{build_lattice, Lattice};
pub use st::{extract_st_constraints, Footprint, Occupancy, PlannedPath, StConstraintSet};
pub use tunnel::{extract_tunnel, Tunnel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionLabel {
    Yield,
    Overtake,
    BypassLeft,
    BypassRight,
    Ignore,
}

impl DecisionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionLabel::Yield => "yield",
            DecisionLabel::Overtake => "overtake",
            DecisionLabel::BypassLeft => "bypass_left",
            DecisionLabel::BypassRight => "bypass_right",
            DecisionLabel::Ignore => "ignore",
        }
    }

    /// Label seen in the scenario mirrored about the centerline.
    pub fn mirrored(self) -> Self {
        match self {
            DecisionLabel::BypassLeft => DecisionLabel::BypassRight,
            DecisionLabel::BypassRight => DecisionLabel::BypassLeft,
            other => other,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecisionError {
    #[error("no room for the vehicle: half width {half_width:.3} m is below {needed:.3} m")]
    NoRoom { half_width: f64, needed: f64 },
    #[error("every lattice path is blocked")]
    AllBlocked,
    #[error("tunnel collapses at s = {s:.2}: [{lower:.3}, {upper:.3}]")]
    TunnelCollapse { s: f64, lower: f64, upper: f64 },
    #[error("s-t bounds infeasible at t = {t:.2}: [{lower:.3}, {upper:.3}]")]
    StInfeasible { t: f64, lower: f64, upper: f64 },
    #[error("ego pose cannot be projected: {0}")]
    Projection(String),
}

impl DecisionError {
    pub fn kind(&self) -> &'static str {
        match self {
            DecisionError::NoRoom { .. } => "NoRoom",
            DecisionError::AllBlocked => "AllBlocked",
            DecisionError::TunnelCollapse { .. } => "TunnelCollapse",
            DecisionError::StInfeasible { .. } => "StInfeasible",
            DecisionError::Projection(_) => "Projection",
        }
    }
}

/// Axis-aligned box in (s, l).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetBox {
    pub s_min: f64,
    pub s_max: f64,
    pub l_min: f64,
    pub l_max: f64,
}

impl FrenetBox {
    /// Bounds of a polygon's vertices and edge midpoints projected onto the
    /// line. `None` when no point projects unambiguously.
    pub fn of_polygon(line: &ReferenceLine, poly: &Polygon) -> Option<Self> {
        let v = &poly.vertices;
        let mut out: Option<FrenetBox> = None;
        for (i, &p) in v.iter().enumerate() {
            let q = v[(i + 1) % v.len()];
            for pt in [p, p.lerp(q, 0.5)] {
                let Ok(f) = line.to_frenet(pt) else { continue };
                out = Some(match out {
                    None => FrenetBox {
                        s_min: f.s,
                        s_max: f.s,
                        l_min: f.l,
                        l_max: f.l,
                    },
                    Some(b) => FrenetBox {
                        s_min: b.s_min.min(f.s),
                        s_max: b.s_max.max(f.s),
                        l_min: b.l_min.min(f.l),
                        l_max: b.l_max.max(f.l),
                    },
                });
            }
        }
        out
    }

    pub fn expanded_s(self, ds: f64) -> Self {
        Self {
            s_min: self.s_min - ds,
            s_max: self.s_max + ds,
            ..self
        }
    }

    /// Distance from the segment (s0, l0)–(s1, l1) to this box (0 inside).
    pub fn segment_distance(&self, s0: f64, l0: f64, s1: f64, l1: f64) -> f64 {
        let inside = |s: f64, l: f64| s >= self.s_min && s <= self.s_max && l >= self.l_min && l <= self.l_max;
        if inside(s0, l0) || inside(s1, l1) || self.segment_crosses(s0, l0, s1, l1) {
            return 0.0;
        }
        let a = Vec2::new(s0, l0);
        let b = Vec2::new(s1, l1);
        let corners = [
            Vec2::new(self.s_min, self.l_min),
            Vec2::new(self.s_max, self.l_min),
            Vec2::new(self.s_max, self.l_max),
            Vec2::new(self.s_min, self.l_max),
        ];
        let mut d = self.point_distance(s0, l0).min(self.point_distance(s1, l1));
        for c in corners {
            d = d.min(crate::geometry::point_segment_distance(c, a, b));
        }
        d
    }

    fn point_distance(&self, s: f64, l: f64) -> f64 {
        let ds = (self.s_min - s).max(s - self.s_max).max(0.0);
        let dl = (self.l_min - l).max(l - self.l_max).max(0.0);
        ds.hypot(dl)
    }

    fn segment_crosses(&self, s0: f64, l0: f64, s1: f64, l1: f64) -> bool {
        // Liang–Barsky clip
        let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
        let d = [s1 - s0, l1 - l0];
        let p = [(-d[0], s0 - self.s_min), (d[0], self.s_max - s0), (-d[1], l0 - self.l_min), (d[1], self.l_max - l0)];
        for (pk, qk) in p {
            if pk == 0.0 {
                if qk < 0.0 {
                    return false;
                }
            } else {
                let r = qk / pk;
                if pk < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }
}

/// Inputs shared by the decision operations.
#[derive(Debug, Clone)]
pub struct DecisionContext<'a> {
    pub line: &'a ReferenceLine,
    pub vehicle: &'a VehicleParams,
    pub config: &'a PlannerConfig,
    pub road_half_width: f64,
    pub goal_s: f64,
    pub through_goal: bool,
    /// Ego rectangle center in frenet coordinates; `dl_ds` is the tangent
    /// of the heading relative to the line.
    pub ego: FrenetPose,
    pub ego_speed: f64,
    pub ego_accel: f64,
}

impl<'a> DecisionContext<'a> {
    pub fn new(scenario: &'a Scenario, line: &'a ReferenceLine) -> Result<Self, DecisionError> {
        let ego = &scenario.ego;
        let f = line
            .to_frenet(ego.position)
            .map_err(|e| DecisionError::Projection(e.to_string()))?;
        let rel = normalize_angle(ego.heading - line.heading_at(f.s));
        let rel = rel.clamp(-1.4, 1.4);
        Ok(Self {
            line,
            vehicle: &scenario.vehicle,
            config: &scenario.config,
            road_half_width: scenario.road_half_width,
            goal_s: scenario.goal_s,
            through_goal: scenario.through_goal,
            ego: FrenetPose {
                s: f.s,
                l: f.l,
                dl_ds: rel.tan(),
                ddl_ds2: None,
            },
            ego_speed: ego.speed.max(0.0),
            // deceleration that would reverse the vehicle before the jerk
            // limit can release it is cut back
            ego_accel: ego
                .accel
                .max(-(2.0 * scenario.vehicle.max_jerk * ego.speed.max(0.0)).sqrt()),
        })
    }

    pub fn path_spacing(&self) -> f64 {
        self.config.path_spacing()
    }

    /// Path grid stations, the first at the ego.
    pub fn path_stations(&self) -> Vec<f64> {
        let ds = self.path_spacing();
        (0..self.config.path.grid_count).map(|i| self.ego.s + i as f64 * ds).collect()
    }

    /// Speed used to estimate when the ego reaches a station.
    pub fn nominal_speed(&self) -> f64 {
        self.ego_speed.clamp(1.0, self.vehicle.max_speed.max(1.0))
    }

    pub fn nominal_time(&self, s: f64) -> f64 {
        ((s - self.ego.s) / self.nominal_speed()).max(0.0)
    }

    pub fn cover(&self) -> CircleCover {
        CircleCover::for_vehicle(self.vehicle)
    }

    /// Lateral room needed to pass beside an obstacle.
    pub fn passing_width(&self) -> f64 {
        2.0 * self.cover().radius + self.config.decision.lateral_margin + 0.02
    }
}

/// How an obstacle is handled by the decision layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObstacleClass {
    /// Resolved in space by the lattice (bypass or ignore).
    Lateral,
    /// Resolved in time (yield or overtake): crossing traffic, or an
    /// obstacle that leaves no room to pass.
    Temporal,
}

/// Per-obstacle data reused across the decision operations.
#[derive(Debug, Clone)]
pub struct ObstacleView<'p> {
    pub prediction: &'p PredictedTrajectory,
    pub class: ObstacleClass,
    /// Box at the nominal time of each path station, expanded by half the
    /// ego length along s.
    pub station_boxes: Vec<Option<FrenetBox>>,
    /// Unexpanded box at the nominal time of each path station.
    pub raw_boxes: Vec<Option<FrenetBox>>,
    pub sigmas: Vec<f64>,
    pub initial_box: Option<FrenetBox>,
}

pub fn classify(pred: &PredictedTrajectory, ctx: &DecisionContext) -> ObstacleClass {
    let Some(b) = FrenetBox::of_polygon(ctx.line, &pred.polygon_at(0.0)) else {
        return ObstacleClass::Lateral;
    };
    let v = pred.initial_velocity();
    if v.norm() > 0.05 {
        let s_mid = 0.5 * (b.s_min + b.s_max);
        let rel = normalize_angle(v.angle() - ctx.line.heading_at(s_mid)).abs();
        if (std::f64::consts::FRAC_PI_4..=3.0 * std::f64::consts::FRAC_PI_4).contains(&rel) {
            return ObstacleClass::Temporal;
        }
    }
    let half = ctx.road_half_width;
    let left_gap = half - b.l_max;
    let right_gap = b.l_min + half;
    if left_gap.max(right_gap) < ctx.passing_width() {
        ObstacleClass::Temporal
    } else {
        ObstacleClass::Lateral
    }
}

pub fn obstacle_views<'p>(preds: &'p [PredictedTrajectory], ctx: &DecisionContext) -> Vec<ObstacleView<'p>> {
    let stations = ctx.path_stations();
    let half_len = 0.5 * ctx.vehicle.length;
    preds
        .iter()
        .map(|p| {
            let class = classify(p, ctx);
            let mut raw = Vec::with_capacity(stations.len());
            let mut sig = Vec::with_capacity(stations.len());
            for &s in &stations {
                let t = ctx.nominal_time(s);
                let st = p.state_at(t);
                raw.push(FrenetBox::of_polygon(ctx.line, &p.polygon_at(t)));
                sig.push(st.sigma);
            }
            ObstacleView {
                prediction: p,
                class,
                station_boxes: raw.iter().map(|b| b.map(|b| b.expanded_s(half_len))).collect(),
                raw_boxes: raw,
                sigmas: sig,
                initial_box: FrenetBox::of_polygon(ctx.line, &p.polygon_at(0.0)),
            }
        })
        .collect()
}

/// Output of the lattice search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoarseTrajectory {
    pub nodes: Vec<(f64, f64)>,
    pub decisions: BTreeMap<String, DecisionLabel>,
    pub total_cost: f64,
}

impl CoarseTrajectory {
    /// Lateral offset at station s, interpolated between nodes and held
    /// past the ends.
    pub fn l_at(&self, s: f64) -> f64 {
        let n = &self.nodes;
        if s <= n[0].0 {
            return n[0].1;
        }
        for w in n.windows(2) {
            if s <= w[1].0 {
                let u = (s - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + u * (w[1].1 - w[0].1);
            }
        }
        n[n.len() - 1].1
    }
}

/// Build the cost model, run the search and label every obstacle.
pub fn decide(
    lattice: &Lattice,
    views: &[ObstacleView],
    ctx: &DecisionContext,
) -> Result<CoarseTrajectory, DecisionError> {
    let model = DpCostModel::new(lattice, views, ctx);
    let res = dp_search(lattice, &model)?;
    let nodes: Vec<(f64, f64)> = lattice.stations.iter().copied().zip(res.nodes.iter().copied()).collect();
    let mut coarse = CoarseTrajectory {
        nodes,
        decisions: BTreeMap::new(),
        total_cost: res.cost,
    };
    for v in views {
        let label = match v.class {
            ObstacleClass::Lateral => lateral_label(v, &coarse, lattice, ctx),
            ObstacleClass::Temporal => temporal_label(v, &coarse, ctx),
        };
        coarse.decisions.insert(v.prediction.obstacle_id.clone(), label);
    }
    Ok(coarse)
}

fn lateral_label(v: &ObstacleView, coarse: &CoarseTrajectory, lattice: &Lattice, ctx: &DecisionContext) -> DecisionLabel {
    let m = lattice.stations.len();
    let mut left = 0;
    let mut right = 0;
    let mut near = false;
    for k in 1..m {
        let Some(b) = v.station_boxes[k] else { continue };
        let s = lattice.stations[k];
        if s < b.s_min || s > b.s_max {
            continue;
        }
        let l = coarse.nodes[k].1;
        let gap = (b.l_min - l).max(l - b.l_max).max(0.0);
        if gap <= ctx.config.decision.ignore_distance {
            near = true;
        }
        if l >= 0.5 * (b.l_min + b.l_max) {
            left += 1;
        } else {
            right += 1;
        }
    }
    if !near {
        DecisionLabel::Ignore
    } else if right == 0 {
        DecisionLabel::BypassLeft
    } else if left == 0 {
        DecisionLabel::BypassRight
    } else {
        DecisionLabel::Yield
    }
}

fn temporal_label(v: &ObstacleView, coarse: &CoarseTrajectory, ctx: &DecisionContext) -> DecisionLabel {
    let half_len = 0.5 * ctx.vehicle.length;
    let reach = 0.5 * ctx.vehicle.width + ctx.config.decision.lateral_margin;
    let pred = v.prediction;
    let end = coarse.nodes.last().map_or(ctx.ego.s, |n| n.0);
    for smp in &pred.samples {
        let Some(b) = FrenetBox::of_polygon(ctx.line, &pred.polygon_at(smp.t)) else { continue };
        let b = b.expanded_s(half_len);
        if b.s_max < ctx.ego.s || b.s_min > end {
            continue;
        }
        let lo = b.s_min.max(ctx.ego.s);
        let hi = b.s_max.min(end);
        let mut probes = vec![lo, hi];
        probes.extend(coarse.nodes.iter().map(|n| n.0).filter(|s| *s > lo && *s < hi));
        let hit = probes.iter().any(|&s| {
            let l = coarse.l_at(s);
            l + reach >= b.l_min && l - reach <= b.l_max
        });
        if !hit {
            continue;
        }
        // pass ahead only if the far edge can be cleared before the conflict starts
        let target = b.s_max + ctx.config.decision.margin_long;
        let arrival = ctx.nominal_time(target);
        let start = crate::qp::constraints::SpeedStart {
            s: ctx.ego.s,
            v: ctx.ego_speed,
            a: ctx.ego_accel,
        };
        let reachable = crate::qp::constraints::max_reach(&start, ctx.vehicle, smp.t) >= target;
        return if arrival < smp.t && reachable {
            DecisionLabel::Overtake
        } else {
            DecisionLabel::Yield
        };
    }
    DecisionLabel::Yield
}
