use serde::Serialize;

use super::{CoarseTrajectory, DecisionContext, DecisionError, DecisionLabel, FrenetBox};
use crate::geometry::{FrenetPose, ReferenceLine, Vec2};
use crate::prediction::PredictedTrajectory;
use crate::qp::constraints::{max_reach, SpeedStart};

/// Station bounds per speed grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct StConstraintSet {
    pub times: Vec<f64>,
    pub s_lower: Vec<f64>,
    pub s_upper: Vec<f64>,
    /// Some bound tighter than the open-road default applies at the horizon end.
    pub stop_demand: bool,
}

/// Blocked station interval of one obstacle on one speed grid interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Occupancy {
    pub obstacle_id: String,
    pub t0: f64,
    pub t1: f64,
    pub s_min: f64,
    pub s_max: f64,
}

/// Lateral offsets over stations, linear between grid points and held
/// past the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    pub stations: Vec<f64>,
    pub l: Vec<f64>,
}

impl PlannedPath {
    pub fn start(&self) -> f64 {
        self.stations[0]
    }

    pub fn end(&self) -> f64 {
        self.stations[self.stations.len() - 1]
    }

    fn segment(&self, s: f64) -> Option<usize> {
        let n = self.stations.len();
        if s < self.stations[0] || s > self.stations[n - 1] || n < 2 {
            return None;
        }
        let ds = self.stations[1] - self.stations[0];
        Some((((s - self.stations[0]) / ds).floor() as usize).min(n - 2))
    }

    pub fn l_at(&self, s: f64) -> f64 {
        match self.segment(s) {
            Some(i) => {
                let u = (s - self.stations[i]) / (self.stations[i + 1] - self.stations[i]);
                self.l[i] + u * (self.l[i + 1] - self.l[i])
            }
            None if s < self.stations[0] => self.l[0],
            None => self.l[self.l.len() - 1],
        }
    }

    pub fn slope_at(&self, s: f64) -> f64 {
        match self.segment(s) {
            Some(i) => (self.l[i + 1] - self.l[i]) / (self.stations[i + 1] - self.stations[i]),
            None => 0.0,
        }
    }

    /// Cartesian position and heading of the rectangle center at station s.
    pub fn pose_at(&self, line: &ReferenceLine, s: f64) -> (Vec2, f64) {
        let pose = FrenetPose {
            s,
            l: self.l_at(s),
            dl_ds: self.slope_at(s),
            ddl_ds2: None,
        };
        line.from_frenet(&pose).unwrap_or_else(|_| {
            let (p, h) = line.frame_at_station(s.clamp(0.0, line.length()));
            (p + Vec2::from_angle(h).perp() * pose.l, h)
        })
    }
}

/// Disc centers of the ego footprint along a path.
pub struct Footprint {
    pub s0: f64,
    pub step: f64,
    pub centers: Vec<[Vec2; 2]>,
    pub radius: f64,
}

impl Footprint {
    pub fn along(path: &PlannedPath, ctx: &DecisionContext, step: f64) -> Self {
        let cover = ctx.cover();
        let count = ((path.end() - path.start()) / step).floor() as usize + 1;
        let centers = (0..count)
            .map(|k| {
                let s = path.start() + k as f64 * step;
                let (p, h) = path.pose_at(ctx.line, s);
                let dir = Vec2::from_angle(h);
                [p + dir * cover.offsets[0], p + dir * cover.offsets[1]]
            })
            .collect();
        Self {
            s0: path.start(),
            step,
            centers,
            radius: cover.radius,
        }
    }

    /// Station interval whose discs touch the polygon, searched within `[lo, hi]`.
    fn hits(&self, poly: &crate::geometry::Polygon, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let n = self.centers.len();
        let a = (((lo - self.s0) / self.step).floor().max(0.0) as usize).min(n);
        let b = (((hi - self.s0) / self.step).ceil().max(0.0) as usize + 1).min(n);
        let center = poly.centroid();
        let far = poly.bounding_radius(center) + self.radius;
        let mut out: Option<(f64, f64)> = None;
        for k in a..b {
            let c = &self.centers[k];
            if c[0].distance(center) > far && c[1].distance(center) > far {
                continue;
            }
            if poly.distance_to_point(c[0]) <= self.radius || poly.distance_to_point(c[1]) <= self.radius {
                let s = self.s0 + k as f64 * self.step;
                out = Some(out.map_or((s, s), |(x, y)| (x.min(s), y.max(s))));
            }
        }
        out
    }
}

pub const FOOTPRINT_STEP: f64 = 0.1;
pub const INTERVAL_SUBSAMPLES: usize = 10;

/// Sweep every obstacle against the path footprint and turn the occupied
/// stations into per-time bounds.
pub fn extract_st_constraints(
    coarse: &CoarseTrajectory,
    path: &PlannedPath,
    preds: &[PredictedTrajectory],
    ctx: &DecisionContext,
    times: &[f64],
) -> Result<(StConstraintSet, Vec<Occupancy>), DecisionError> {
    let n = times.len();
    let margin = ctx.config.decision.margin_long;
    let half_len = 0.5 * ctx.vehicle.length;
    let ego_s = ctx.ego.s;
    let default_upper = if ctx.through_goal {
        path.end()
    } else {
        path.end().min(ctx.goal_s)
    };
    let mut upper = vec![default_upper; n];
    let mut lower = vec![ego_s; n];
    let fp = Footprint::along(path, ctx, FOOTPRINT_STEP);
    let reach = fp.radius + half_len + 0.5;
    let mut occupancy = Vec::new();

    for pred in preds {
        let label = coarse.decisions.get(&pred.obstacle_id).copied();
        let Some(b0) = FrenetBox::of_polygon(ctx.line, &pred.polygon_at(0.0)) else { continue };
        if b0.s_max < ego_s - half_len {
            continue;
        }
        let region_at = |t: f64| -> Option<(f64, f64)> {
            let poly = pred.polygon_at(t);
            let b = FrenetBox::of_polygon(ctx.line, &poly)?;
            if b.s_max + reach < path.start() || b.s_min - reach > path.end() {
                return None;
            }
            fp.hits(&poly, b.s_min - reach, b.s_max + reach)
        };
        let fixed = if pred.is_static() { Some(region_at(0.0)) } else { None };
        for j in 0..n.saturating_sub(1) {
            let (t0, t1) = (times[j], times[j + 1]);
            let mut region: Option<(f64, f64)> = fixed.flatten();
            for k in 0..=INTERVAL_SUBSAMPLES {
                if fixed.is_some() {
                    break;
                }
                let t = t0 + (t1 - t0) * k as f64 / INTERVAL_SUBSAMPLES as f64;
                if let Some((a, b)) = region_at(t) {
                    region = Some(region.map_or((a, b), |(x, y)| (x.min(a), y.max(b))));
                }
            }
            let Some((a, b)) = region else { continue };
            occupancy.push(Occupancy {
                obstacle_id: pred.obstacle_id.clone(),
                t0,
                t1,
                s_min: a,
                s_max: b,
            });
            for idx in [j, j + 1] {
                if label == Some(DecisionLabel::Overtake) {
                    lower[idx] = lower[idx].max(b + margin);
                } else {
                    upper[idx] = upper[idx].min(a - margin);
                }
            }
        }
    }

    // a stopped ego sitting a hair past its bound keeps a feasible window
    for u in upper.iter_mut() {
        if *u < ego_s && ego_s - *u <= 0.1 {
            *u = ego_s;
        }
    }
    for j in (0..n.saturating_sub(1)).rev() {
        upper[j] = upper[j].min(upper[j + 1]);
    }
    for j in 1..n {
        lower[j] = lower[j].max(lower[j - 1]);
    }
    let start = SpeedStart {
        s: ego_s,
        v: ctx.ego_speed,
        a: ctx.ego_accel,
    };
    for j in 0..n {
        if lower[j] > upper[j] + 1e-9 {
            return Err(DecisionError::StInfeasible {
                t: times[j],
                lower: lower[j],
                upper: upper[j],
            });
        }
        let r = max_reach(&start, ctx.vehicle, times[j]);
        if j > 0 && lower[j] > r + 1e-9 {
            return Err(DecisionError::StInfeasible {
                t: times[j],
                lower: lower[j],
                upper: r,
            });
        }
    }
    let stop_demand = upper[n - 1] < path.end() - 1e-9;
    Ok((
        StConstraintSet {
            times: times.to_vec(),
            s_lower: lower,
            s_upper: upper,
            stop_demand,
        },
        occupancy,
    ))
}
