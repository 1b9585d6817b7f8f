use super::{Diagnostics, FailureReason, PlanArtifacts, Provenance, Trajectory, TrajectorySample};
use crate::config::PlannerConfig;
use super::reference::{track_speed, RampLimits};
use crate::geometry::{normalize_angle, Vec2};
use crate::scenario::{EgoState, VehicleParams};

/// Polyline with cumulative arc length, extended straight past its end.
struct Track {
    points: Vec<Vec2>,
    s: Vec<f64>,
}

impl Track {
    fn new(points: Vec<Vec2>) -> Option<Self> {
        let mut pts: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last().map_or(true, |q| q.distance(p) > 1e-9) {
                pts.push(p);
            }
        }
        if pts.len() < 2 {
            return None;
        }
        let mut s = vec![0.0];
        for w in pts.windows(2) {
            s.push(s[s.len() - 1] + w[0].distance(w[1]));
        }
        Some(Self { points: pts, s })
    }

    /// Arc length of the point closest to `p`.
    fn project(&self, p: Vec2) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..self.points.len() - 1 {
            let (a, b) = (self.points[i], self.points[i + 1]);
            let d = b - a;
            let u = ((p - a).dot(d) / d.norm_sq()).clamp(0.0, 1.0);
            let dist = p.distance(a + d * u);
            if dist < best.0 {
                best = (dist, self.s[i] + u * (self.s[i + 1] - self.s[i]));
            }
        }
        best.1
    }

    fn pose_at(&self, s: f64) -> (Vec2, f64) {
        let n = self.points.len();
        let i = match self.s.iter().position(|&x| x > s) {
            Some(0) => 0,
            Some(k) => k - 1,
            None => n - 2,
        }
        .min(n - 2);
        let (a, b) = (self.points[i], self.points[i + 1]);
        let len = self.s[i + 1] - self.s[i];
        let dir = (b - a) * (1.0 / len);
        (a + dir * (s - self.s[i]), dir.angle())
    }
}

/// Decelerate to rest along the previous trajectory's path, or straight
/// ahead when there is none, then hold.
pub fn fallback_stop(previous: Option<&Trajectory>, ego: &EgoState, vehicle: &VehicleParams, cfg: &PlannerConfig) -> Trajectory {
    let decel = vehicle.max_decel.min(cfg.planner.comfort_decel);
    let samples = brake_along(previous.map(|p| p.samples.as_slice()), ego, decel, cfg.speed.grid_count, cfg.speed_dt());
    Trajectory {
        samples,
        provenance: Provenance::FallbackStop,
        diagnostics: Diagnostics {
            failure: Some(FailureReason::new("fallback", "Requested", "stop trajectory requested directly")),
            ..Diagnostics::default()
        },
        artifacts: PlanArtifacts::default(),
        warm: None,
    }
}

/// Constant-deceleration stop following the polyline of `path` from the
/// ego's projection onto it; `n` samples at step `dt`.
pub fn brake_along(path: Option<&[TrajectorySample]>, ego: &EgoState, decel: f64, n: usize, dt: f64) -> Vec<TrajectorySample> {
    let decel = decel.max(1e-3);
    let n = n.max(2);
    let v0 = ego.speed.max(0.0);
    let t_stop = v0 / decel;
    let track = path.and_then(|p| Track::new(p.iter().map(|s| s.position).collect()));
    let s0 = track.as_ref().map_or(0.0, |t| t.project(ego.position));
    (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            let tt = t.min(t_stop);
            let d = v0 * tt - 0.5 * decel * tt * tt;
            let speed = (v0 - decel * tt).max(0.0);
            let (position, heading) = match &track {
                Some(tr) if v0 > 0.0 => tr.pose_at(s0 + d),
                _ => (ego.position + Vec2::from_angle(ego.heading) * d, ego.heading),
            };
            TrajectorySample {
                t,
                position,
                heading: normalize_angle(heading),
                curvature: 0.0,
                speed,
                accel: if speed > 0.0 { -decel } else { 0.0 },
            }
        })
        .collect()
}

/// Retime `samples` along their own polyline, tracking `factor` times
/// the planned speed within the vehicle's acceleration and jerk limits.
pub fn scale_speed(samples: &[TrajectorySample], ego: &EgoState, factor: f64, vehicle: &VehicleParams) -> Vec<TrajectorySample> {
    let dt = samples.get(1).map_or(0.1, |s| s.t - samples[0].t);
    let Some(track) = Track::new(samples.iter().map(|s| s.position).collect()) else {
        return brake_along(None, ego, vehicle.max_decel, samples.len(), dt);
    };
    let s0 = track.project(ego.position);
    let horizon = samples[samples.len() - 1].t - samples[0].t;
    let limits = RampLimits {
        max_accel: vehicle.max_accel,
        max_decel: vehicle.max_decel,
        max_jerk: vehicle.max_jerk,
    };
    let planned = |t: f64| {
        let k = samples.partition_point(|s| s.t - samples[0].t <= t).clamp(1, samples.len()) - 1;
        samples[k].speed
    };
    let r = track_speed(0.0, ego.speed, ego.accel, horizon, limits, |t, _, _, _| factor * planned(t));
    samples
        .iter()
        .map(|src| {
            let t = src.t - samples[0].t;
            let (position, heading) = track.pose_at(s0 + r.s_at(t));
            TrajectorySample {
                t: src.t,
                position,
                heading: normalize_angle(heading),
                curvature: src.curvature,
                speed: r.v_at(t),
                accel: r.a_at(t),
            }
        })
        .collect()
}
