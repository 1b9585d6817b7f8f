//! Reference implementations used as oracles by the integration tests.
//! Nothing here calls into the code it checks beyond plain data access.
#![allow(dead_code)]

use std::path::PathBuf;

use corridor_planner::decision::{DpCostModel, FrenetBox, Lattice, RiskBox};
use corridor_planner::geometry::{Polygon, Vec2};
use corridor_planner::qp::{ConstraintRow, QpProblem, ReferenceProfileSet, SymBand};
use corridor_planner::scenario::{load_scenario, Scenario};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

/// Every shipped scenario, sorted by file name.
pub fn suite() -> Vec<Scenario> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .expect("scenario directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| load_scenario(&std::fs::read_to_string(p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display())))
        .collect()
}

pub fn scenario(name: &str) -> Scenario {
    let p = scenario_dir().join(format!("{name}.json"));
    load_scenario(&std::fs::read_to_string(&p).unwrap()).unwrap()
}

// ---- geometry ----

fn project(v: &[Vec2], axis: Vec2) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in v {
        let d = p.x * axis.x + p.y * axis.y;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

/// Signed clearance of two convex polygons from the separating-axis
/// theorem: the largest gap over all edge normals. Positive values are a
/// lower bound on the distance; negative values are minus the penetration
/// depth.
pub fn signed_clearance(a: &Polygon, b: &Polygon) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for poly in [a, b] {
        let v = &poly.vertices;
        for i in 0..v.len() {
            let e = Vec2::new(v[(i + 1) % v.len()].x - v[i].x, v[(i + 1) % v.len()].y - v[i].y);
            let len = (e.x * e.x + e.y * e.y).sqrt();
            if len == 0.0 {
                continue;
            }
            let axis = Vec2::new(-e.y / len, e.x / len);
            let (amin, amax) = project(&a.vertices, axis);
            let (bmin, bmax) = project(&b.vertices, axis);
            best = best.max((bmin - amax).max(amin - bmax));
        }
    }
    best
}

pub fn rect(cx: f64, cy: f64, heading: f64, length: f64, width: f64) -> Polygon {
    let (s, c) = heading.sin_cos();
    let corners = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)];
    Polygon {
        vertices: corners
            .iter()
            .map(|(u, v)| {
                let (x, y) = (u * length, v * width);
                Vec2::new(cx + c * x - s * y, cy + s * x + c * y)
            })
            .collect(),
    }
}

// ---- speed ramp ----

/// Speed at time `t` of the fastest jerk- and acceleration-limited rise
/// from rest to `v_target`, starting and ending with zero acceleration.
pub fn ramp_speed(t: f64, v_target: f64, a_max: f64, jerk: f64) -> f64 {
    // peak acceleration actually reached
    let a_peak = a_max.min((v_target * jerk).sqrt());
    let t_j = a_peak / jerk;
    let t_a = (v_target / a_peak - t_j).max(0.0);
    let t1 = t_j;
    let t2 = t_j + t_a;
    let t3 = t2 + t_j;
    if t <= 0.0 {
        0.0
    } else if t < t1 {
        0.5 * jerk * t * t
    } else if t < t2 {
        0.5 * jerk * t1 * t1 + a_peak * (t - t1)
    } else if t < t3 {
        let u = t3 - t;
        v_target - 0.5 * jerk * u * u
    } else {
        v_target
    }
}

// ---- objective ----

/// Weighted sum of squared deviations of backward-difference derivatives,
/// computed term by term from the definition.
pub fn objective_oracle(refs: &ReferenceProfileSet, y: &[f64], delta: f64, history: [f64; 3]) -> f64 {
    let at = |k: isize| -> f64 {
        if k >= 0 {
            y[k as usize]
        } else {
            history[(-k - 1) as usize]
        }
    };
    let mut total = 0.0;
    for p in &refs.profiles {
        for i in 0..y.len() {
            let k = i as isize;
            let d = [
                at(k),
                (at(k) - at(k - 1)) / delta,
                (at(k) - 2.0 * at(k - 1) + at(k - 2)) / (delta * delta),
                (at(k) - 3.0 * at(k - 1) + 3.0 * at(k - 2) - at(k - 3)) / (delta * delta * delta),
            ];
            for j in 0..4 {
                let e = d[j] - p.refs[j][i];
                total += p.weights[j][i] * e * e;
            }
        }
    }
    total
}

// ---- QP ----

/// Dense copy of the problem.
pub struct DenseQp {
    pub h: Vec<Vec<f64>>,
    pub g: Vec<f64>,
    pub c: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DenseQp {
    pub fn value(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut v = self.c;
        for i in 0..n {
            v += self.g[i] * x[i];
            for j in 0..n {
                v += 0.5 * x[i] * self.h[i][j] * x[j];
            }
        }
        v
    }

    /// Box-constrained minimum by accelerated projected gradient with
    /// adaptive restart, run until the iterate stops moving.
    pub fn projected_gradient(&self) -> Vec<f64> {
        let n = self.g.len();
        let lip = (0..n)
            .map(|i| self.h[i].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
            .max(1e-12);
        let step = 1.0 / lip;
        let proj = |x: &mut Vec<f64>| {
            for i in 0..n {
                x[i] = x[i].clamp(self.lo[i], self.hi[i]);
            }
        };
        let grad = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| self.g[i] + (0..n).map(|j| self.h[i][j] * x[j]).sum::<f64>())
                .collect()
        };
        let mut x = vec![0.0; n];
        proj(&mut x);
        let mut yk = x.clone();
        let mut t = 1.0_f64;
        for _ in 0..2_000_000 {
            let gy = grad(&yk);
            let mut xn: Vec<f64> = (0..n).map(|i| yk[i] - step * gy[i]).collect();
            proj(&mut xn);
            let moved = (0..n).map(|i| (xn[i] - x[i]).abs()).fold(0.0, f64::max);
            // restart momentum when it points uphill
            let uphill: f64 = (0..n).map(|i| gy[i] * (xn[i] - x[i])).sum();
            let tn = if uphill > 0.0 { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
            let beta = if uphill > 0.0 { 0.0 } else { (t - 1.0) / tn };
            yk = (0..n).map(|i| xn[i] + beta * (xn[i] - x[i])).collect();
            x = xn;
            t = tn;
            if moved < 1e-15 {
                break;
            }
        }
        x
    }
}

/// Random strictly convex box-constrained problem of size `n`, both as a
/// solver problem and a dense oracle copy.
pub fn random_box_qp(rng: &mut ChaCha8Rng, n: usize) -> (QpProblem, DenseQp) {
    // H = MᵀM + μI
    let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mu = rng.gen_range(0.05..1.0);
    let mut h = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            h[i][j] = (0..n).map(|k| m[k][i] * m[k][j]).sum::<f64>() + if i == j { mu } else { 0.0 };
        }
    }
    let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut lo = vec![f64::NEG_INFINITY; n];
    let mut hi = vec![f64::INFINITY; n];
    let mut rows = Vec::new();
    for i in 0..n {
        match rng.gen_range(0..4) {
            0 => {}
            1 => lo[i] = rng.gen_range(-1.0..0.5),
            2 => hi[i] = rng.gen_range(-0.5..1.0),
            _ => {
                let a = rng.gen_range(-1.0..0.5);
                lo[i] = a;
                hi[i] = a + rng.gen_range(0.0..1.0);
            }
        }
        if lo[i].is_finite() || hi[i].is_finite() {
            rows.push(ConstraintRow::bound(i, lo[i], hi[i]));
        }
    }
    let mut band = SymBand::zeros(n, n.saturating_sub(1));
    for i in 0..n {
        for j in 0..=i {
            band.add(i, j, h[i][j]);
        }
    }
    let problem = QpProblem {
        hessian: band,
        linear: g.clone(),
        constant: 0.0,
        rows,
    };
    (problem, DenseQp { h, g, c: 0.0, lo, hi })
}

// ---- DP ----

/// Random lattice and cost model. `symmetric` lattices have no obstacles
/// and mirror-symmetric samples, so equal-cost ties are common.
pub fn random_lattice(rng: &mut ChaCha8Rng, symmetric: bool, max_nodes: usize) -> (Lattice, DpCostModel) {
    let stations_n = rng.gen_range(4..=6);
    let spacing = rng.gen_range(1.0..4.0);
    let stations: Vec<f64> = (0..stations_n).map(|k| 10.0 + k as f64 * spacing).collect();
    let per = ((max_nodes - 1) / (stations_n - 1)).min(9);
    let mut samples = vec![vec![if symmetric { 0.0 } else { rng.gen_range(-0.5..0.5) }]];
    for _ in 1..stations_n {
        let count = if symmetric { 2 * rng.gen_range(1..=per / 2) + 1 } else { rng.gen_range(1..=per) };
        let step = rng.gen_range(0.3..0.8);
        let row: Vec<f64> = if symmetric {
            let h = (count / 2) as i64;
            (-h..=h).map(|i| i as f64 * step).collect()
        } else {
            let mut r: Vec<f64> = (0..count).map(|_| rng.gen_range(-2.0..2.0)).collect();
            r.sort_by(f64::total_cmp);
            r
        };
        samples.push(row);
    }
    let fields = (0..stations_n)
        .map(|k| {
            if symmetric || k == 0 {
                return Vec::new();
            }
            (0..rng.gen_range(0..3))
                .map(|_| {
                    let s = stations[k] - rng.gen_range(0.0..spacing);
                    let l = rng.gen_range(-2.0..2.0);
                    RiskBox {
                        bbox: FrenetBox {
                            s_min: s,
                            s_max: s + rng.gen_range(0.1..1.5),
                            l_min: l,
                            l_max: l + rng.gen_range(0.1..1.0),
                        },
                        sigma: rng.gen_range(0.0..0.5),
                    }
                })
                .collect()
        })
        .collect();
    let lattice = Lattice {
        stations,
        samples,
        entry_l: if symmetric { 0.0 } else { rng.gen_range(-0.5..0.5) },
    };
    let model = DpCostModel {
        origin: lattice.stations[0],
        spacing,
        w_ref: rng.gen_range(0.0..2.0),
        w_smooth: rng.gen_range(0.0..5.0),
        w_kappa: rng.gen_range(0.0..50.0),
        w_obs: rng.gen_range(0.0..100.0),
        sigma_geom: rng.gen_range(0.1..1.0),
        half_width: rng.gen_range(0.0..0.6),
        fields,
    };
    (lattice, model)
}

/// Exhaustive search over every node sequence. Ties go to the sequence
/// whose nodes, read from the last station backwards, come first in the
/// order (|l|, l).
pub fn dp_brute_force(lattice: &Lattice, model: &DpCostModel) -> Option<(Vec<usize>, f64)> {
    let m = lattice.stations.len();
    let smp = &lattice.samples;
    let key = |k: usize, i: usize| (smp[k][i].abs(), smp[k][i]);
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut idx = vec![0usize; m];
    loop {
        // cost accumulated station by station
        let mut cost = 0.0;
        let mut prev2 = lattice.entry_l;
        for k in 1..m {
            let c = model.edge_cost(k, prev2, smp[k - 1][idx[k - 1]], smp[k][idx[k]]);
            cost += c;
            prev2 = smp[k - 1][idx[k - 1]];
        }
        if cost.is_finite() {
            let better = match &best {
                None => true,
                Some((b, bc)) => {
                    if cost != *bc {
                        cost < *bc
                    } else {
                        let mine: Vec<_> = (0..m).rev().map(|k| key(k, idx[k])).collect();
                        let theirs: Vec<_> = (0..m).rev().map(|k| key(k, b[k])).collect();
                        mine.partial_cmp(&theirs) == Some(std::cmp::Ordering::Less)
                    }
                }
            };
            if better {
                best = Some((idx.clone(), cost));
            }
        }
        // odometer increment
        let mut k = m;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < smp[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

// ---- fuzz ----

fn straight_line(len: f64) -> Vec<Value> {
    (0..=((len / 5.0) as usize)).map(|i| json!([i as f64 * 5.0, 0.0])).collect()
}

fn arc_line(len: f64, radius: f64) -> Vec<Value> {
    let n = (len / 2.0) as usize;
    (0..=n)
        .map(|i| {
            let a = i as f64 * 2.0 / radius;
            json!([radius * a.sin(), radius * (1.0 - a.cos())])
        })
        .collect()
}

fn wave_line(len: f64, amp: f64, wavelength: f64) -> Vec<Value> {
    let n = (len / 2.0) as usize;
    (0..=n)
        .map(|i| {
            let x = i as f64 * 2.0;
            json!([x, amp * (2.0 * std::f64::consts::PI * x / wavelength).sin()])
        })
        .collect()
}

/// A random scenario as JSON. Some are deliberately hard or infeasible:
/// obstacles on top of the ego, walls across the road, roads barely wider
/// than the vehicle, starts off the road or at speed with strong braking.
pub fn fuzz_scenario(rng: &mut ChaCha8Rng, index: usize) -> Value {
    let len = rng.gen_range(40.0..120.0);
    let (line, curved) = match rng.gen_range(0..3) {
        0 => (straight_line(len), false),
        1 => (arc_line(len, rng.gen_range(15.0..80.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }), true),
        _ => (wave_line(len, rng.gen_range(0.5..4.0), rng.gen_range(30.0..80.0)), true),
    };
    let first = line[0].as_array().unwrap();
    let second = line[1].as_array().unwrap();
    let (x0, y0) = (first[0].as_f64().unwrap(), first[1].as_f64().unwrap());
    let h0 = (second[1].as_f64().unwrap() - y0).atan2(second[0].as_f64().unwrap() - x0);
    let half_width: f64 = rng.gen_range(0.6..3.5);
    let ego_l = rng.gen_range(-1.0..1.0) * half_width.min(1.0);
    let ego = json!({
        "x": x0 + 1.2 * h0.cos() - ego_l * h0.sin(),
        "y": y0 + 1.2 * h0.sin() + ego_l * h0.cos(),
        "heading": h0 + rng.gen_range(-0.4..0.4),
        "speed": if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..6.0) },
        "accel": rng.gen_range(-3.0..1.5),
    });
    let n_obs = rng.gen_range(0..6);
    let along = |rng: &mut ChaCha8Rng| -> (f64, f64) {
        // a point near the line, picked from its vertices
        let p = line[rng.gen_range(0..line.len())].as_array().unwrap().clone();
        (p[0].as_f64().unwrap(), p[1].as_f64().unwrap())
    };
    let mut obstacles = Vec::new();
    for k in 0..n_obs {
        let (mut x, mut y) = along(rng);
        if !curved {
            y += rng.gen_range(-3.0..3.0);
        } else {
            x += rng.gen_range(-2.0..2.0);
            y += rng.gen_range(-2.0..2.0);
        }
        let (len_o, wid_o) = match rng.gen_range(0..4) {
            0 => (0.6, 0.6),
            1 => (1.8, 0.7),
            2 => (4.5, 1.9),
            // wall across the road
            _ => (0.5, 2.0 * half_width + 2.0),
        };
        let heading = rng.gen_range(-3.1..3.1);
        let motion = match rng.gen_range(0..5) {
            0 | 1 => json!({"type": "static"}),
            2 => json!({"type": "constant_velocity", "speed": rng.gen_range(0.0..5.0), "heading": rng.gen_range(-3.1..3.1)}),
            3 => json!({"type": "lane_follow", "speed": rng.gen_range(0.0..4.0)}),
            _ => {
                let mut t = 0.0;
                let mut poses = Vec::new();
                for _ in 0..rng.gen_range(1..4) {
                    t += rng.gen_range(0.2..3.0);
                    poses.push(json!({"t": t, "x": x + rng.gen_range(-6.0..6.0), "y": y + rng.gen_range(-6.0..6.0), "heading": rng.gen_range(-3.1..3.1)}));
                }
                json!({"type": "scripted", "poses": poses})
            }
        };
        obstacles.push(json!({
            "id": format!("o{k}"),
            "footprint": [[-len_o / 2.0, -wid_o / 2.0], [len_o / 2.0, -wid_o / 2.0], [len_o / 2.0, wid_o / 2.0], [-len_o / 2.0, wid_o / 2.0]],
            "pose": {"x": x, "y": y, "heading": heading},
            "motion": motion,
        }));
    }
    if rng.gen_bool(0.05) {
        // obstacle on top of the ego
        obstacles.push(json!({
            "id": "on_ego",
            "footprint": [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]],
            "pose": {"x": ego["x"], "y": ego["y"], "heading": 0.0},
            "motion": {"type": "static"},
        }));
    }
    json!({
        "name": format!("fuzz_{index}"),
        "reference_line": line,
        "ego": ego,
        "obstacles": obstacles,
        "goal_s": rng.gen_range(10.0..len),
        "road_half_width": half_width,
        "through_goal": rng.gen_bool(0.2),
    })
}
