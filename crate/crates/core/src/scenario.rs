//! Planning situation data model and the JSON scenario file format.

use std::collections::HashSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PlannerConfig;
use crate::geometry::{arc_length_parametrize, normalize_angle, Polygon, ReferenceLine, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub length: f64,
    pub width: f64,
    pub wheelbase: f64,
    pub max_speed: f64,
    pub max_accel: f64,
    /// Positive magnitude.
    pub max_decel: f64,
    pub max_jerk: f64,
    pub max_curvature: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            length: 2.4,
            width: 1.0,
            wheelbase: 1.6,
            max_speed: 7.0,
            max_accel: 1.5,
            max_decel: 4.0,
            max_jerk: 3.0,
            max_curvature: 0.35,
        }
    }
}

impl VehicleParams {
    /// Body rectangle centered on the vehicle reference point.
    pub fn footprint(&self) -> Polygon {
        Polygon::rectangle(self.length, self.width)
    }
}

/// Ego state. `position` is the center of the body rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoState {
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub accel: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedPose {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl TimedPose {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motion {
    Static,
    ConstantVelocity { speed: f64, heading: f64 },
    /// Follows the scenario's reference line at constant speed.
    LaneFollow { speed: f64 },
    /// Poses timestamped relative to the current instant.
    Scripted { poses: Vec<TimedPose> },
}

impl Motion {
    pub fn is_static(&self) -> bool {
        match self {
            Motion::Static => true,
            Motion::ConstantVelocity { speed, .. } | Motion::LaneFollow { speed } => *speed == 0.0,
            Motion::Scripted { .. } => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub id: String,
    /// Convex polygon in the body frame.
    pub footprint: Polygon,
    pub pose: Pose,
    pub motion: Motion,
}

impl Obstacle {
    pub fn polygon(&self) -> Polygon {
        self.footprint.transformed(self.pose.position, self.pose.heading)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: Option<String>,
    pub polyline: Vec<Vec2>,
    pub reference_line: ReferenceLine,
    pub ego: EgoState,
    pub vehicle: VehicleParams,
    pub obstacles: Vec<Obstacle>,
    pub goal_s: f64,
    pub road_half_width: f64,
    /// When set, the goal counts as reached without stopping on it.
    pub through_goal: bool,
    /// Outcome the scenario is expected to produce in closed loop.
    pub expected_outcome: Option<String>,
    pub config: PlannerConfig,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {}", .0.join("; "))]
    Validation(Vec<String>),
}

// ---- file representation ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    reference_line: Vec<[f64; 2]>,
    ego: EgoFile,
    #[serde(default)]
    vehicle: VehicleParams,
    #[serde(default)]
    obstacles: Vec<ObstacleFile>,
    goal_s: f64,
    road_half_width: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    through_goal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expected_outcome: Option<String>,
    #[serde(default)]
    config: Option<PlannerConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EgoFile {
    x: f64,
    y: f64,
    heading: f64,
    speed: f64,
    #[serde(default)]
    accel: f64,
    #[serde(default)]
    curvature: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseFile {
    x: f64,
    y: f64,
    heading: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleFile {
    id: String,
    footprint: Vec<[f64; 2]>,
    pose: PoseFile,
    motion: Motion,
}

/// Parse and validate scenario file content.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let scenario = from_file(file)?;
    let violations = validate(&scenario);
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Validation(violations))
    }
}

fn from_file(f: ScenarioFile) -> Result<Scenario, ScenarioError> {
    let polyline: Vec<Vec2> = f.reference_line.iter().map(|p| Vec2::new(p[0], p[1])).collect();
    let reference_line = arc_length_parametrize(&polyline)
        .map_err(|e| ScenarioError::Validation(vec![format!("reference line: {e}")]))?;
    let obstacles = f
        .obstacles
        .into_iter()
        .map(|o| Obstacle {
            id: o.id,
            // vertices kept as written so that serialization round-trips
            footprint: Polygon {
                vertices: o.footprint.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
            },
            pose: Pose {
                position: Vec2::new(o.pose.x, o.pose.y),
                heading: normalize_angle(o.pose.heading),
            },
            motion: o.motion,
        })
        .collect();
    Ok(Scenario {
        name: f.name,
        polyline,
        reference_line,
        ego: EgoState {
            position: Vec2::new(f.ego.x, f.ego.y),
            heading: normalize_angle(f.ego.heading),
            speed: f.ego.speed,
            accel: f.ego.accel,
            curvature: f.ego.curvature,
        },
        vehicle: f.vehicle,
        obstacles,
        goal_s: f.goal_s,
        road_half_width: f.road_half_width,
        through_goal: f.through_goal,
        expected_outcome: f.expected_outcome,
        config: f.config.unwrap_or_default(),
    })
}

/// All invariant violations of a scenario; empty iff the scenario is valid.
pub fn validate(s: &Scenario) -> Vec<String> {
    let mut out = Vec::new();
    let v = &s.vehicle;
    for (name, val) in [
        ("length", v.length),
        ("width", v.width),
        ("wheelbase", v.wheelbase),
        ("max_speed", v.max_speed),
        ("max_accel", v.max_accel),
        ("max_decel", v.max_decel),
        ("max_jerk", v.max_jerk),
        ("max_curvature", v.max_curvature),
    ] {
        if !(val.is_finite() && val > 0.0) {
            out.push(format!("vehicle {name} must be positive"));
        }
    }
    if v.length <= v.wheelbase {
        out.push("vehicle length must exceed wheelbase".to_string());
    }

    let line = &s.reference_line;
    let pts = line.points();
    for w in pts.windows(3) {
        let a = (w[1] - w[0]).angle();
        let b = (w[2] - w[1]).angle();
        if normalize_angle(b - a).abs() > 0.75 * PI {
            out.push("reference line turns back on itself".to_string());
            break;
        }
    }

    let e = &s.ego;
    if !(e.position.is_finite() && e.heading.is_finite() && e.accel.is_finite()) {
        out.push("ego state must be finite".to_string());
    }
    if !(e.speed.is_finite() && e.speed >= 0.0) {
        out.push("ego speed must be non-negative".to_string());
    }
    if !(e.curvature.abs() <= v.max_curvature) {
        out.push("ego curvature exceeds vehicle max_curvature".to_string());
    }

    if !(s.goal_s.is_finite() && s.goal_s >= 0.0) {
        out.push("goal_s must be non-negative".to_string());
    } else if s.goal_s > line.length() + 1e-9 {
        out.push("goal_s exceeds reference line length".to_string());
    }
    if !(s.road_half_width > v.width / 2.0) {
        out.push("road narrower than vehicle".to_string());
    }

    let mut seen = HashSet::new();
    for o in &s.obstacles {
        if !seen.insert(o.id.as_str()) {
            out.push(format!("duplicate obstacle id {}", o.id));
        }
        let fp = &o.footprint;
        if fp.vertices.len() < 3 {
            out.push(format!("obstacle {}: footprint needs ≥ 3 vertices", o.id));
        } else if fp.vertices.iter().any(|p| !p.is_finite()) || !(fp.area() > 0.0) {
            out.push(format!("obstacle {}: footprint needs positive area", o.id));
        } else if !fp.is_convex() {
            out.push(format!("obstacle {}: footprint must be convex", o.id));
        }
        if !(o.pose.position.is_finite() && o.pose.heading.is_finite()) {
            out.push(format!("obstacle {}: pose must be finite", o.id));
        }
        match &o.motion {
            Motion::Static => {}
            Motion::ConstantVelocity { speed, heading } => {
                if !(speed.is_finite() && *speed >= 0.0 && heading.is_finite()) {
                    out.push(format!("obstacle {}: invalid constant_velocity motion", o.id));
                }
            }
            Motion::LaneFollow { speed } => {
                if !(speed.is_finite() && *speed >= 0.0) {
                    out.push(format!("obstacle {}: invalid lane_follow speed", o.id));
                }
            }
            Motion::Scripted { poses } => {
                if poses.is_empty() {
                    out.push(format!("obstacle {}: scripted motion needs poses", o.id));
                }
                let finite = poses
                    .iter()
                    .all(|p| p.t.is_finite() && p.x.is_finite() && p.y.is_finite() && p.heading.is_finite());
                if !finite || poses.windows(2).any(|w| w[1].t <= w[0].t) {
                    out.push(format!(
                        "obstacle {}: script timestamps must be finite and strictly increasing",
                        o.id
                    ));
                }
            }
        }
    }

    out.extend(s.config.violations());
    out
}

impl Scenario {
    /// Serialize back to the scenario file format.
    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            name: self.name.clone(),
            reference_line: self.polyline.iter().map(|p| [p.x, p.y]).collect(),
            ego: EgoFile {
                x: self.ego.position.x,
                y: self.ego.position.y,
                heading: self.ego.heading,
                speed: self.ego.speed,
                accel: self.ego.accel,
                curvature: self.ego.curvature,
            },
            vehicle: self.vehicle.clone(),
            obstacles: self
                .obstacles
                .iter()
                .map(|o| ObstacleFile {
                    id: o.id.clone(),
                    footprint: o.footprint.vertices.iter().map(|p| [p.x, p.y]).collect(),
                    pose: PoseFile {
                        x: o.pose.position.x,
                        y: o.pose.position.y,
                        heading: o.pose.heading,
                    },
                    motion: o.motion.clone(),
                })
                .collect(),
            goal_s: self.goal_s,
            road_half_width: self.road_half_width,
            through_goal: self.through_goal,
            expected_outcome: self.expected_outcome.clone(),
            config: Some(self.config.clone()),
        };
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }

    /// Mirror the whole scenario about the x axis (y → −y), which mirrors
    /// every lateral offset about the reference line.
    pub fn mirrored(&self) -> Scenario {
        let flip = |p: Vec2| Vec2::new(p.x, -p.y);
        let flip_h = |h: f64| normalize_angle(-h);
        let mut out = self.clone();
        out.polyline = self.polyline.iter().map(|p| flip(*p)).collect();
        out.reference_line = self.reference_line.mirrored();
        out.ego.position = flip(self.ego.position);
        out.ego.heading = flip_h(self.ego.heading);
        out.ego.curvature = -self.ego.curvature;
        for o in &mut out.obstacles {
            o.footprint = Polygon::new(o.footprint.vertices.iter().map(|p| flip(*p)).collect());
            o.pose.position = flip(o.pose.position);
            o.pose.heading = flip_h(o.pose.heading);
            o.motion = match &o.motion {
                Motion::ConstantVelocity { speed, heading } => Motion::ConstantVelocity {
                    speed: *speed,
                    heading: flip_h(*heading),
                },
                Motion::Scripted { poses } => Motion::Scripted {
                    poses: poses
                        .iter()
                        .map(|p| TimedPose {
                            t: p.t,
                            x: p.x,
                            y: -p.y,
                            heading: flip_h(p.heading),
                        })
                        .collect(),
                },
                m => m.clone(),
            };
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "reference_line": [[0, 0], [100, 0]],
        "ego": {"x": 0, "y": 0, "heading": 0, "speed": 0},
        "goal_s": 100,
        "road_half_width": 2.0
    }"#;

    fn with_obstacles(obstacles: &str) -> String {
        format!(
            r#"{{
            "reference_line": [[0, 0], [100, 0]],
            "ego": {{"x": 0, "y": 0, "heading": 0, "speed": 0}},
            "obstacles": {obstacles},
            "goal_s": 100,
            "road_half_width": 2.0
        }}"#
        )
    }

    #[test]
    fn minimal_file_loads() {
        let s = load_scenario(MINIMAL).unwrap();
        assert!(s.obstacles.is_empty());
        assert_eq!(s.goal_s, 100.0);
        assert!(validate(&s).is_empty());
        assert_eq!(s.config, PlannerConfig::default());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let ob = r#"{"id": "a", "footprint": [[-1,-1],[1,-1],[1,1],[-1,1]],
                     "pose": {"x": 10, "y": 0, "heading": 0}, "motion": {"type": "static"}}"#;
        let text = with_obstacles(&format!("[{ob}, {ob}]"));
        match load_scenario(&text) {
            Err(ScenarioError::Validation(v)) => {
                assert!(v.iter().any(|m| m.contains("duplicate") && m.contains('a')), "{v:?}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn small_grid_is_rejected() {
        let text = MINIMAL.replace(
            "\"goal_s\": 100,",
            "\"goal_s\": 100, \"config\": {\"path\": {\"grid_count\": 3}},",
        );
        match load_scenario(&text) {
            Err(ScenarioError::Validation(v)) => {
                assert!(v.iter().any(|m| m.contains("grid count below minimum 4")), "{v:?}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_vertex_footprint() {
        let ob = r#"[{"id": "cone", "footprint": [[0,0],[1,0]],
                     "pose": {"x": 10, "y": 0, "heading": 0}, "motion": {"type": "static"}}]"#;
        match load_scenario(&with_obstacles(ob)) {
            Err(ScenarioError::Validation(v)) => {
                assert_eq!(v, vec!["obstacle cone: footprint needs ≥ 3 vertices".to_string()])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn narrow_road() {
        let text = MINIMAL.replace("\"road_half_width\": 2.0", "\"road_half_width\": 0.3");
        match load_scenario(&text) {
            Err(ScenarioError::Validation(v)) => {
                assert_eq!(v, vec!["road narrower than vehicle".to_string()])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_parse_error() {
        let text = MINIMAL.replace("\"goal_s\"", "\"gaol_s\": 1, \"goal_s\"");
        match load_scenario(&text) {
            Err(ScenarioError::Parse { line, message, .. }) => {
                assert!(line >= 1);
                assert!(message.contains("gaol_s"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_locus() {
        let err = load_scenario("{\n \"reference_line\": [[0,0],\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn motion_tags() {
        let ob = r#"[{"id": "p", "footprint": [[-0.3,-0.3],[0.3,-0.3],[0.3,0.3],[-0.3,0.3]],
                     "pose": {"x": 10, "y": -3, "heading": 1.57},
                     "motion": {"type": "scripted", "poses": [{"t": 0, "x": 10, "y": -3, "heading": 1.57},
                                                               {"t": 4, "x": 10, "y": 3, "heading": 1.57}]}},
                    {"id": "c", "footprint": [[-1,-0.5],[1,-0.5],[1,0.5],[-1,0.5]],
                     "pose": {"x": 30, "y": 0, "heading": 0},
                     "motion": {"type": "lane_follow", "speed": 2.0}},
                    {"id": "v", "footprint": [[-1,-0.5],[1,-0.5],[1,0.5],[-1,0.5]],
                     "pose": {"x": 50, "y": 1, "heading": 3.14},
                     "motion": {"type": "constant_velocity", "speed": 2.0, "heading": 3.14}}]"#;
        let s = load_scenario(&with_obstacles(ob)).unwrap();
        assert!(matches!(s.obstacles[0].motion, Motion::Scripted { .. }));
        assert_eq!(s.obstacles[1].motion, Motion::LaneFollow { speed: 2.0 });
        let back = load_scenario(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }
}
