//! Linear constraint rows for the path QP (over l(s)) and the speed QP
//! (over s(t)).

use thiserror::Error;

use super::objective::History;
use super::ConstraintRow;
use crate::decision::{StConstraintSet, Tunnel};
use crate::scenario::VehicleParams;

const STENCILS: [&[f64]; 4] = [&[1.0], &[1.0, -1.0], &[1.0, -2.0, 1.0], &[1.0, -3.0, 3.0, -1.0]];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("infeasible bounds at grid {index}: {what} needs [{lower:.4}, {upper:.4}]")]
    InfeasibleBounds {
        index: usize,
        what: String,
        lower: f64,
        upper: f64,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Discs covering the vehicle rectangle, centered on the body axis at
/// signed longitudinal offsets from the rectangle center.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleCover {
    pub offsets: Vec<f64>,
    pub radius: f64,
}

impl CircleCover {
    /// Two discs at ±length/4, each covering one half of the rectangle.
    pub fn for_vehicle(v: &VehicleParams) -> Self {
        let q = v.length / 4.0;
        Self {
            offsets: vec![-q, q],
            radius: (q * q + 0.25 * v.width * v.width).sqrt(),
        }
    }
}

/// Row bounding the j-th backward difference at grid `i`; indices before
/// the grid start are folded into the bounds via `history`.
fn diff_row(i: usize, j: usize, delta: f64, history: &History, lower: f64, upper: f64) -> ConstraintRow {
    let scale = delta.powi(-(j as i32));
    let stencil = STENCILS[j];
    let mut shift = 0.0;
    let first = i.saturating_sub(j);
    let mut coeffs = vec![0.0; i - first + 1];
    for (m, s) in stencil.iter().enumerate() {
        if m <= i {
            coeffs[i - m - first] = s * scale;
        } else {
            shift += s * scale * history.values[m - i - 1];
        }
    }
    ConstraintRow::new(first, coeffs, lower - shift, upper - shift)
}

/// Lateral bound for a disc whose center sits at station `center`.
fn disc_bounds(tunnel: &Tunnel, center: f64, radius: f64) -> (f64, f64) {
    let st = &tunnel.stations;
    let n = st.len();
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let (a, b) = (center - radius, center + radius);
    for k in 0..n {
        let left = if k == 0 { f64::NEG_INFINITY } else { 0.5 * (st[k - 1] + st[k]) };
        let right = if k + 1 == n { f64::INFINITY } else { 0.5 * (st[k] + st[k + 1]) };
        if right >= a && left <= b {
            lo = lo.max(tunnel.lower[k]);
            hi = hi.min(tunnel.upper[k]);
        }
    }
    (lo + radius, hi - radius)
}

/// Rows for the path QP. Grid value 0 is the start pose; `history` holds
/// the virtual values behind it.
pub fn build_path_constraints(
    tunnel: &Tunnel,
    vehicle: &VehicleParams,
    cover: &CircleCover,
    start_l: f64,
    history: &History,
    delta_s: f64,
    max_heading: f64,
) -> Result<Vec<ConstraintRow>, ConstraintError> {
    let n = tunnel.stations.len();
    if tunnel.lower.len() != n || tunnel.upper.len() != n {
        return Err(ConstraintError::ShapeMismatch("tunnel bound lengths differ".to_string()));
    }
    let mut rows = Vec::with_capacity(5 * n);
    rows.push(ConstraintRow::bound(0, start_l, start_l));
    let slope = max_heading.tan();
    for i in 1..n {
        for &c in &cover.offsets {
            let (lo, hi) = disc_bounds(tunnel, tunnel.stations[i] + c, cover.radius);
            if lo > hi {
                return Err(ConstraintError::InfeasibleBounds {
                    index: i,
                    what: format!("disc at offset {c:+.3}"),
                    lower: lo,
                    upper: hi,
                });
            }
            // l_i + c·(l_i − l_{i−1})/Δs
            rows.push(ConstraintRow::new(i - 1, vec![-c / delta_s, 1.0 + c / delta_s], lo, hi));
        }
        rows.push(diff_row(i, 1, delta_s, history, -slope, slope));
        rows.push(diff_row(i, 2, delta_s, history, -vehicle.max_curvature, vehicle.max_curvature));
    }
    Ok(rows)
}

/// Ego longitudinal state at the first speed grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedStart {
    pub s: f64,
    pub v: f64,
    pub a: f64,
}

impl SpeedStart {
    /// Speed and acceleration clipped to the vehicle's envelope.
    pub fn history(&self, vehicle: &VehicleParams, delta_t: f64) -> History {
        let a = self.a.clamp(-vehicle.max_decel, vehicle.max_accel);
        History::from_state(self.s, self.v.max(0.0), a, 0.0, delta_t)
    }
}

/// Closed-form farthest station reachable at time t under the acceleration limit.
pub fn max_reach(start: &SpeedStart, vehicle: &VehicleParams, t: f64) -> f64 {
    let v0 = start.v.max(0.0);
    let vmax = vehicle.max_speed.max(v0);
    let t_cap = ((vmax - v0) / vehicle.max_accel).max(0.0);
    if t <= t_cap {
        start.s + v0 * t + 0.5 * vehicle.max_accel * t * t
    } else {
        start.s + v0 * t_cap + 0.5 * vehicle.max_accel * t_cap * t_cap + vmax * (t - t_cap)
    }
}

/// Closed-form nearest station reachable at time t under the braking limit.
pub fn min_reach(start: &SpeedStart, vehicle: &VehicleParams, t: f64) -> f64 {
    let v0 = start.v.max(0.0);
    let t_stop = v0 / vehicle.max_decel;
    let tt = t.min(t_stop);
    start.s + v0 * tt - 0.5 * vehicle.max_decel * tt * tt
}

/// Rows for the speed QP. `curvatures[i]` is the path curvature at the
/// nominal station of grid point i.
pub fn build_speed_constraints(
    st: &StConstraintSet,
    vehicle: &VehicleParams,
    start: &SpeedStart,
    curvatures: &[f64],
    delta_t: f64,
    a_lat_max: f64,
) -> Result<Vec<ConstraintRow>, ConstraintError> {
    let n = st.times.len();
    if st.s_lower.len() != n || st.s_upper.len() != n || curvatures.len() != n {
        return Err(ConstraintError::ShapeMismatch("s-t bounds and curvature lengths differ".to_string()));
    }
    let tol = 1e-6;
    for i in 0..n {
        let (lo, hi) = (st.s_lower[i], st.s_upper[i]);
        if lo > hi + tol {
            return Err(ConstraintError::InfeasibleBounds {
                index: i,
                what: "station window".to_string(),
                lower: lo,
                upper: hi,
            });
        }
        let t = st.times[i];
        if i > 0 && min_reach(start, vehicle, t) > hi + tol {
            return Err(ConstraintError::InfeasibleBounds {
                index: i,
                what: "stopping distance".to_string(),
                lower: min_reach(start, vehicle, t),
                upper: hi,
            });
        }
        if i > 0 && max_reach(start, vehicle, t) < lo - tol {
            return Err(ConstraintError::InfeasibleBounds {
                index: i,
                what: "reachable distance".to_string(),
                lower: lo,
                upper: max_reach(start, vehicle, t),
            });
        }
    }

    let history = start.history(vehicle, delta_t);
    let mut rows = Vec::with_capacity(4 * n + 1);
    rows.push(ConstraintRow::bound(0, start.s, start.s));

    // Fastest speed the braking limits can enforce at each grid; the
    // curvature cap is never set below it, so rows stay jointly feasible.
    let mut v_brake = (start.v.max(0.0) - 0.5 * start.a.clamp(-vehicle.max_decel, vehicle.max_accel) * delta_t).max(0.0);
    let mut a_brake = start.a.clamp(-vehicle.max_decel, vehicle.max_accel);
    for i in 1..n {
        a_brake = (a_brake - vehicle.max_jerk * delta_t).max(-vehicle.max_decel);
        v_brake = (v_brake + a_brake * delta_t).max(0.0);
        let k = curvatures[i - 1].abs().max(curvatures[i].abs()).max(1e-6);
        let cap = vehicle.max_speed.min((a_lat_max / k).sqrt()).max(v_brake + 1e-3);
        rows.push(ConstraintRow::bound(
            i,
            st.s_lower[i].min(st.s_upper[i]),
            st.s_upper[i].max(st.s_lower[i]),
        ));
        rows.push(diff_row(i, 1, delta_t, &history, 0.0, cap));
        rows.push(diff_row(i, 2, delta_t, &history, -vehicle.max_decel, vehicle.max_accel));
        rows.push(diff_row(i, 3, delta_t, &history, -vehicle.max_jerk, vehicle.max_jerk));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tunnel(n: usize, lo: f64, hi: f64) -> Tunnel {
        Tunnel {
            stations: (0..n).map(|i| 2.0 * i as f64).collect(),
            lower: vec![lo; n],
            upper: vec![hi; n],
        }
    }

    fn flat_history() -> History {
        History { values: [0.0; 3] }
    }

    #[test]
    fn centered_discs() {
        let cover = CircleCover {
            offsets: vec![0.0, 0.0],
            radius: 0.6,
        };
        let rows = build_path_constraints(&tunnel(6, -2.0, 2.0), &VehicleParams::default(), &cover, 0.0, &flat_history(), 2.0, 0.6)
            .unwrap();
        let discs: Vec<_> = rows.iter().filter(|r| r.coeffs.len() == 2 && r.coeffs[0] == 0.0).collect();
        assert_eq!(discs.len(), 10);
        for r in discs {
            assert!((r.lower + 1.4).abs() < 1e-12 && (r.upper - 1.4).abs() < 1e-12);
        }
    }

    #[test]
    fn narrow_tunnel_is_infeasible() {
        let cover = CircleCover {
            offsets: vec![0.0],
            radius: 0.6,
        };
        let err = build_path_constraints(&tunnel(6, -0.55, 0.55), &VehicleParams::default(), &cover, 0.0, &flat_history(), 2.0, 0.6);
        assert!(matches!(err, Err(ConstraintError::InfeasibleBounds { .. })));
    }

    #[test]
    fn vehicle_cover_contains_rectangle() {
        let v = VehicleParams::default();
        let c = CircleCover::for_vehicle(&v);
        // farthest rectangle corner from its nearest disc
        let corner = (v.length / 2.0 - v.length / 4.0).hypot(v.width / 2.0);
        assert!((corner - c.radius).abs() < 1e-12);
    }

    fn open_st(n: usize, dt: f64, s0: f64, s_max: f64) -> StConstraintSet {
        StConstraintSet {
            times: (0..n).map(|i| i as f64 * dt).collect(),
            s_lower: vec![s0; n],
            s_upper: vec![s_max; n],
            stop_demand: false,
        }
    }

    #[test]
    fn ramp_is_feasible_from_rest() {
        let v = VehicleParams::default();
        let dt = 0.2;
        let n = 20;
        let start = SpeedStart { s: 0.0, v: 0.0, a: 0.0 };
        let rows = build_speed_constraints(&open_st(n, dt, 0.0, 100.0), &v, &start, &vec![0.0; n], dt, 1.5).unwrap();
        // jerk-limited ramp to max accel, sampled on the grid
        let mut s = vec![0.0; n];
        let (mut vel, mut acc) = (0.0_f64, 0.0_f64);
        for i in 1..n {
            acc = (acc + v.max_jerk * dt).min(v.max_accel);
            vel = (vel + acc * dt).min(v.max_speed);
            s[i] = s[i - 1] + vel * dt;
        }
        for r in &rows {
            assert!(r.violation(&s) < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn frozen_upper_bound_fails_precheck() {
        let mut v = VehicleParams::default();
        v.max_decel = 0.2;
        let st = StConstraintSet {
            stop_demand: true,
            ..open_st(40, 0.2, 0.0, 0.0)
        };
        let start = SpeedStart { s: 0.0, v: 5.0, a: 0.0 };
        let err = build_speed_constraints(&st, &v, &start, &vec![0.0; 40], 0.2, 1.5);
        assert!(matches!(err, Err(ConstraintError::InfeasibleBounds { .. })));
    }

    #[test]
    fn curvature_caps_speed() {
        let v = VehicleParams::default();
        let start = SpeedStart { s: 0.0, v: 0.0, a: 0.0 };
        let mut k = vec![0.0; 10];
        k[4] = 0.5;
        k[5] = 0.5;
        let rows = build_speed_constraints(&open_st(10, 0.2, 0.0, 50.0), &v, &start, &k, 0.2, 1.0).unwrap();
        let speed_rows: Vec<_> = rows.iter().filter(|r| r.coeffs.len() == 2 && r.lower == 0.0).collect();
        assert!((speed_rows[4].upper - 2f64.sqrt()).abs() < 1e-12);
        assert!((speed_rows[0].upper - v.max_speed).abs() < 1e-12);
    }
}
