//! Planner configuration. Every field has a default; scenario files may
//! override any subset, and the CLI applies dotted-key overrides on top.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub planner: CycleConfig,
    pub path: PathConfig,
    pub speed: SpeedConfig,
    pub decision: DecisionConfig,
    pub prediction: PredictionConfig,
    pub solver: SolverConfig,
    pub guardian: GuardianConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            planner: CycleConfig::default(),
            path: PathConfig::default(),
            speed: SpeedConfig::default(),
            decision: DecisionConfig::default(),
            prediction: PredictionConfig::default(),
            solver: SolverConfig::default(),
            guardian: GuardianConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleConfig {
    /// Desired cruise speed before the vehicle and road limits apply (m/s).
    pub v_target: f64,
    /// Road speed limit (m/s).
    pub speed_limit: f64,
    pub replan_period: f64,
    pub comfort_decel: f64,
    /// Lateral acceleration bound used for the curvature speed cap (m/s²).
    pub a_lat_max: f64,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            v_target: 3.0,
            speed_limit: 7.0,
            replan_period: 0.1,
            comfort_decel: 2.0,
            a_lat_max: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    pub horizon: f64,
    pub grid_count: usize,
    /// Attraction towards the coarse DP trajectory (j = 0).
    pub w_coarse: f64,
    pub w_dl: f64,
    pub w_ddl: f64,
    pub w_dddl: f64,
    /// Bound on the path heading relative to the road (rad).
    pub max_heading: f64,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            horizon: 60.0,
            grid_count: 30,
            w_coarse: 1.0,
            w_dl: 10.0,
            w_ddl: 100.0,
            w_dddl: 100.0,
            max_heading: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedConfig {
    pub horizon: f64,
    pub grid_count: usize,
    /// Cruise profile position tracking (j = 0).
    pub w_cruise_s: f64,
    /// Cruise profile speed tracking (j = 1).
    pub w_cruise_v: f64,
    pub w_accel: f64,
    pub w_jerk: f64,
    /// Terminal stop profile weight (position and zero terminal speed).
    pub w_stop: f64,
}

impl Default for SpeedConfig {
    fn default() -> Self {
        Self {
            horizon: 8.0,
            grid_count: 40,
            w_cruise_s: 1.0,
            w_cruise_v: 50.0,
            w_accel: 0.1,
            w_jerk: 0.01,
            w_stop: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionConfig {
    pub lateral_sample_count: usize,
    pub lateral_sample_spacing: f64,
    pub w_obs: f64,
    pub w_ref: f64,
    pub w_smooth: f64,
    pub w_kappa: f64,
    /// Geometric part of the risk-field spread (m); prediction sigma adds to it.
    pub sigma_geom: f64,
    pub lateral_margin: f64,
    pub margin_long: f64,
    /// Obstacles farther than this from the coarse path are ignored (m).
    pub ignore_distance: f64,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        Self {
            lateral_sample_count: 9,
            lateral_sample_spacing: 0.5,
            w_obs: 10.0,
            w_ref: 1.0,
            w_smooth: 5.0,
            w_kappa: 5.0,
            sigma_geom: 0.3,
            lateral_margin: 0.2,
            margin_long: 1.0,
            ignore_distance: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionConfig {
    pub sigma0: f64,
    pub k_sigma: f64,
    pub lane_attach_threshold: f64,
    pub tau_l: f64,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            sigma0: 0.2,
            k_sigma: 0.3,
            lane_attach_threshold: 2.5,
            tau_l: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol_prim: f64,
    pub tol_dual: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_prim: 1e-4,
            tol_dual: 1e-4,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuardianConfig {
    pub d_emerg: f64,
    pub ttc_emerg: f64,
    pub ttc_slow: f64,
    pub closing_eps: f64,
    /// Planner cycle deadline (s).
    pub deadline: f64,
}

impl Default for GuardianConfig {
    fn default() -> Self {
        Self {
            d_emerg: 0.3,
            ttc_emerg: 1.5,
            ttc_slow: 3.0,
            closing_eps: 1e-3,
            deadline: 0.1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OverrideError {
    #[error("override `{0}` is not of the form key=value")]
    Syntax(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    Value { key: String, reason: String },
}

impl PlannerConfig {
    pub fn path_spacing(&self) -> f64 {
        self.path.horizon / self.path.grid_count as f64
    }

    pub fn speed_dt(&self) -> f64 {
        self.speed.horizon / self.speed.grid_count as f64
    }

    /// Apply a `section.field=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), OverrideError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| OverrideError::Syntax(assignment.to_string()))?;
        let key = key.trim();
        let raw = raw.trim();
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        let mut node = &mut tree;
        for part in key.split('.') {
            node = node
                .get_mut(part)
                .ok_or_else(|| OverrideError::UnknownKey(key.to_string()))?;
        }
        if node.is_object() {
            return Err(OverrideError::UnknownKey(key.to_string()));
        }
        let value: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        *node = value;
        *self = serde_json::from_value(tree).map_err(|e| OverrideError::Value {
            key: key.to_string(),
            reason: e.to_string(),
        })?;
        Ok(())
    }

    /// Invariant violations of the configuration alone.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.path.grid_count < 4 {
            out.push("path grid count below minimum 4".to_string());
        }
        if self.speed.grid_count < 4 {
            out.push("speed grid count below minimum 4".to_string());
        }
        let positive = [
            ("path.horizon", self.path.horizon),
            ("speed.horizon", self.speed.horizon),
            ("planner.replan_period", self.planner.replan_period),
            ("planner.comfort_decel", self.planner.comfort_decel),
            ("planner.a_lat_max", self.planner.a_lat_max),
            ("planner.speed_limit", self.planner.speed_limit),
            ("decision.lateral_sample_spacing", self.decision.lateral_sample_spacing),
            ("decision.sigma_geom", self.decision.sigma_geom),
            ("prediction.tau_l", self.prediction.tau_l),
            ("solver.tol_prim", self.solver.tol_prim),
            ("solver.tol_dual", self.solver.tol_dual),
            ("path.max_heading", self.path.max_heading),
            ("guardian.deadline", self.guardian.deadline),
            ("guardian.closing_eps", self.guardian.closing_eps),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("{name} must be positive"));
            }
        }
        let nonneg = [
            ("planner.v_target", self.planner.v_target),
            ("path.w_coarse", self.path.w_coarse),
            ("path.w_dl", self.path.w_dl),
            ("path.w_ddl", self.path.w_ddl),
            ("path.w_dddl", self.path.w_dddl),
            ("speed.w_cruise_s", self.speed.w_cruise_s),
            ("speed.w_cruise_v", self.speed.w_cruise_v),
            ("speed.w_accel", self.speed.w_accel),
            ("speed.w_jerk", self.speed.w_jerk),
            ("speed.w_stop", self.speed.w_stop),
            ("decision.w_obs", self.decision.w_obs),
            ("decision.w_ref", self.decision.w_ref),
            ("decision.w_smooth", self.decision.w_smooth),
            ("decision.w_kappa", self.decision.w_kappa),
            ("decision.lateral_margin", self.decision.lateral_margin),
            ("decision.margin_long", self.decision.margin_long),
            ("decision.ignore_distance", self.decision.ignore_distance),
            ("prediction.sigma0", self.prediction.sigma0),
            ("prediction.k_sigma", self.prediction.k_sigma),
            ("prediction.lane_attach_threshold", self.prediction.lane_attach_threshold),
            ("guardian.d_emerg", self.guardian.d_emerg),
            ("guardian.ttc_emerg", self.guardian.ttc_emerg),
            ("guardian.ttc_slow", self.guardian.ttc_slow),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                out.push(format!("{name} must be non-negative"));
            }
        }
        if self.path.w_coarse <= 0.0 {
            out.push("path.w_coarse must be positive (anchors the path objective)".to_string());
        }
        if self.speed.w_cruise_s <= 0.0 {
            out.push("speed.w_cruise_s must be positive (anchors the speed objective)".to_string());
        }
        if self.decision.lateral_sample_count == 0 || self.decision.lateral_sample_count % 2 == 0 {
            out.push("decision.lateral_sample_count must be odd".to_string());
        }
        if self.solver.max_iter == 0 {
            out.push("solver.max_iter must be positive".to_string());
        }
        out
    }
}
