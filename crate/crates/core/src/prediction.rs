//! Obstacle motion prediction.
//!
//! The first layer is rule based: obstacles declared as lane followers that
//! sit close enough to the reference line are attached to it, advanced at
//! constant speed along the station axis, and pulled back to the centerline
//! with an exponential lateral decay. Everything else falls back to
//! constant-velocity extrapolation, which is also the substitution point for
//! a learned predictor. Each sample carries a standard deviation that grows
//! linearly with look-ahead for moving obstacles.

use crate::config::PredictionConfig;
use crate::geometry::{lerp_angle, normalize_angle, FrenetPose, Polygon, ReferenceLine, Vec2};
use crate::scenario::{Motion, Obstacle, Pose, TimedPose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionSource {
    Static,
    LaneFollow,
    ConstantVelocity,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedSample {
    pub t: f64,
    pub position: Vec2,
    pub heading: f64,
    /// Standard deviation of the position (m).
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedTrajectory {
    pub obstacle_id: String,
    pub footprint: Polygon,
    pub dt: f64,
    pub samples: Vec<PredictedSample>,
    pub source: PredictionSource,
}

impl PredictedTrajectory {
    pub fn horizon(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn is_static(&self) -> bool {
        self.source == PredictionSource::Static
    }

    /// Interpolated pose and sigma at time `t` (held constant past the horizon).
    pub fn state_at(&self, t: f64) -> PredictedSample {
        let n = self.samples.len();
        if n == 1 || t <= 0.0 {
            return PredictedSample { t, ..self.samples[0] };
        }
        let x = t / self.dt;
        let i = x.floor() as usize;
        if i >= n - 1 {
            return PredictedSample { t, ..self.samples[n - 1] };
        }
        let u = x - i as f64;
        let a = &self.samples[i];
        let b = &self.samples[i + 1];
        PredictedSample {
            t,
            position: a.position.lerp(b.position, u),
            heading: lerp_angle(a.heading, b.heading, u),
            sigma: a.sigma + u * (b.sigma - a.sigma),
        }
    }

    pub fn polygon_at(&self, t: f64) -> Polygon {
        let st = self.state_at(t);
        self.footprint.transformed(st.position, st.heading)
    }

    /// Mean velocity over the first prediction step.
    pub fn initial_velocity(&self) -> Vec2 {
        if self.samples.len() < 2 {
            return Vec2::ZERO;
        }
        (self.samples[1].position - self.samples[0].position) * (1.0 / self.dt)
    }
}

enum Model {
    Static,
    LaneFollow { s0: f64, l0: f64, speed: f64 },
    ConstantVelocity { velocity: Vec2 },
    Scripted,
}

fn choose_model(obstacle: &Obstacle, line: &ReferenceLine, cfg: &PredictionConfig) -> Model {
    match &obstacle.motion {
        Motion::Static => Model::Static,
        Motion::ConstantVelocity { speed, heading } => {
            if *speed == 0.0 {
                Model::Static
            } else {
                Model::ConstantVelocity {
                    velocity: Vec2::from_angle(*heading) * *speed,
                }
            }
        }
        Motion::LaneFollow { speed } => {
            if *speed == 0.0 {
                return Model::Static;
            }
            match line.to_frenet(obstacle.pose.position) {
                Ok(f) if f.l.abs() <= cfg.lane_attach_threshold => Model::LaneFollow {
                    s0: f.s,
                    l0: f.l,
                    speed: *speed,
                },
                _ => Model::ConstantVelocity {
                    velocity: Vec2::from_angle(obstacle.pose.heading) * *speed,
                },
            }
        }
        Motion::Scripted { .. } => Model::Scripted,
    }
}

/// Pose of an obstacle `t` seconds ahead under its chosen model.
fn pose_at(model: &Model, obstacle: &Obstacle, line: &ReferenceLine, cfg: &PredictionConfig, t: f64) -> Pose {
    let start = obstacle.pose;
    if t == 0.0 {
        return start;
    }
    match model {
        Model::Static => start,
        Model::ConstantVelocity { velocity } => Pose {
            position: start.position + *velocity * t,
            heading: start.heading,
        },
        Model::LaneFollow { s0, l0, speed } => {
            let len = line.length();
            let s = (s0 + speed * t).min(len);
            let decay = (-t / cfg.tau_l).exp();
            let l = l0 * decay;
            let moving = s0 + speed * t < len;
            let dl_ds = if moving { -l0 / cfg.tau_l * decay / speed } else { 0.0 };
            let pose = FrenetPose {
                s,
                l,
                dl_ds,
                ddl_ds2: None,
            };
            match line.from_frenet(&pose) {
                Ok((position, heading)) => Pose { position, heading },
                Err(_) => start,
            }
        }
        Model::Scripted => match &obstacle.motion {
            Motion::Scripted { poses } => scripted_pose(start, poses, t),
            _ => start,
        },
    }
}

/// Interpolate a script; the current pose acts as the waypoint at t = 0.
pub fn scripted_pose(current: Pose, poses: &[TimedPose], t: f64) -> Pose {
    let mut prev = (0.0, current.position, current.heading);
    for p in poses {
        if p.t <= 0.0 {
            continue;
        }
        if t <= p.t {
            let u = (t - prev.0) / (p.t - prev.0);
            return Pose {
                position: prev.1.lerp(p.position(), u),
                heading: lerp_angle(prev.2, p.heading, u),
            };
        }
        prev = (p.t, p.position(), p.heading);
    }
    Pose {
        position: prev.1,
        heading: normalize_angle(prev.2),
    }
}

/// Predict one obstacle over `horizon` seconds at step `dt`.
pub fn predict(
    obstacle: &Obstacle,
    line: &ReferenceLine,
    horizon: f64,
    dt: f64,
    cfg: &PredictionConfig,
) -> PredictedTrajectory {
    let model = choose_model(obstacle, line, cfg);
    let source = match model {
        Model::Static => PredictionSource::Static,
        Model::LaneFollow { .. } => PredictionSource::LaneFollow,
        Model::ConstantVelocity { .. } => PredictionSource::ConstantVelocity,
        Model::Scripted => PredictionSource::Scripted,
    };
    let k_sigma = match source {
        PredictionSource::Static | PredictionSource::Scripted => 0.0,
        _ => cfg.k_sigma,
    };
    let count = if dt > 0.0 && horizon > 0.0 {
        (horizon / dt).round().max(1.0) as usize + 1
    } else {
        1
    };
    let samples = (0..count)
        .map(|k| {
            let t = k as f64 * dt;
            let pose = pose_at(&model, obstacle, line, cfg, t);
            PredictedSample {
                t,
                position: pose.position,
                heading: pose.heading,
                sigma: cfg.sigma0 + k_sigma * t,
            }
        })
        .collect();
    PredictedTrajectory {
        obstacle_id: obstacle.id.clone(),
        footprint: obstacle.footprint.clone(),
        dt,
        samples,
        source,
    }
}

/// Ground-truth advance of an obstacle by `dt` under its declared motion.
///
/// Uses the same motion models as [`predict`]; scripted timestamps are
/// shifted so they stay relative to the new current instant.
pub fn advance_obstacle(obstacle: &Obstacle, line: &ReferenceLine, dt: f64, cfg: &PredictionConfig) -> Obstacle {
    let model = choose_model(obstacle, line, cfg);
    let pose = pose_at(&model, obstacle, line, cfg, dt);
    let motion = match &obstacle.motion {
        Motion::Scripted { poses } => Motion::Scripted {
            poses: poses
                .iter()
                .filter(|p| p.t > dt)
                .map(|p| TimedPose { t: p.t - dt, ..*p })
                .collect(),
        },
        m => m.clone(),
    };
    Obstacle {
        id: obstacle.id.clone(),
        footprint: obstacle.footprint.clone(),
        pose: Pose {
            position: pose.position,
            heading: normalize_angle(pose.heading),
        },
        motion,
    }
}
