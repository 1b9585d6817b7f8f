//! Reference-line geometry: arc-length parametrization of a polyline and
//! conversion between Cartesian and road-aligned (station, lateral) coordinates.
//!
//! The line carries a continuous moving frame. Inside segment `i` the
//! position is linear in the station while the frame angle is interpolated
//! linearly between the vertex headings (the bisectors of the adjacent
//! segments). `from_frenet` offsets along that frame's left normal and
//! `to_frenet` inverts it exactly, so the round trip is limited only by the
//! root-finding tolerance whenever the lateral offset stays below the local
//! turning radius. On straight stretches the frame reduces to the ordinary
//! foot-of-perpendicular projection.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum spacing between consecutive polyline points.
pub const MIN_POINT_SPACING: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Counter-clockwise perpendicular.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    #[inline]
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    #[inline]
    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    #[inline]
    pub fn lerp(self, o: Vec2, u: f64) -> Vec2 {
        self + (o - self) * u
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wrap an angle into `[-π, π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Interpolate between two angles along the shorter arc.
pub fn lerp_angle(a: f64, b: f64, u: f64) -> f64 {
    normalize_angle(a + normalize_angle(b - a) * u)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate polyline: {distinct} distinct point(s), need at least 2")]
    DegeneratePolyline { distinct: usize },
    #[error("ambiguous projection: stations {s_a:.3} and {s_b:.3} are equally close")]
    AmbiguousProjection { s_a: f64, s_b: f64 },
    #[error("station {s:.6} outside reference line [0, {length:.6}]")]
    StationOutOfRange { s: f64, length: f64 },
    #[error("non-finite input")]
    NonFinite,
}

/// Road-aligned pose relative to a [`ReferenceLine`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrenetPose {
    pub s: f64,
    pub l: f64,
    pub dl_ds: f64,
    pub ddl_ds2: Option<f64>,
}

impl FrenetPose {
    pub fn new(s: f64, l: f64) -> Self {
        Self {
            s,
            l,
            dl_ds: 0.0,
            ddl_ds2: None,
        }
    }
}

/// Arc-length parametrized centerline.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLine {
    points: Vec<Vec2>,
    s: Vec<f64>,
    heading: Vec<f64>,
    curvature: Vec<f64>,
    /// Frame angle at each vertex, unwrapped so that consecutive values differ by < π.
    frame: Vec<f64>,
}

/// Build a [`ReferenceLine`] from an ordered polyline.
///
/// Consecutive points closer than [`MIN_POINT_SPACING`] are merged.
pub fn arc_length_parametrize(polyline: &[Vec2]) -> Result<ReferenceLine, GeometryError> {
    if polyline.iter().any(|p| !p.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let mut points: Vec<Vec2> = Vec::with_capacity(polyline.len());
    for &p in polyline {
        match points.last() {
            Some(&last) if last.distance(p) <= MIN_POINT_SPACING => {}
            _ => points.push(p),
        }
    }
    if points.len() < 2 {
        return Err(GeometryError::DegeneratePolyline {
            distinct: points.len(),
        });
    }
    let n = points.len();

    let mut s = Vec::with_capacity(n);
    s.push(0.0);
    for w in points.windows(2) {
        let last = *s.last().unwrap();
        s.push(last + w[0].distance(w[1]));
    }

    // segment headings, unwrapped
    let mut seg: Vec<f64> = Vec::with_capacity(n - 1);
    for w in points.windows(2) {
        let raw = (w[1] - w[0]).angle();
        let h = match seg.last() {
            Some(&prev) => prev + normalize_angle(raw - prev),
            None => raw,
        };
        seg.push(h);
    }

    let mut heading = Vec::with_capacity(n);
    let mut frame = Vec::with_capacity(n);
    for i in 0..n {
        let h = if i == n - 1 { seg[n - 2] } else { seg[i] };
        heading.push(h);
        let f = if i == 0 {
            seg[0]
        } else if i == n - 1 {
            seg[n - 2]
        } else {
            0.5 * (seg[i - 1] + seg[i])
        };
        frame.push(f);
    }

    let mut curvature = vec![0.0; n];
    if n >= 3 {
        for i in 1..n - 1 {
            curvature[i] = menger_curvature(points[i - 1], points[i], points[i + 1]);
        }
        curvature[0] = curvature[1];
        curvature[n - 1] = curvature[n - 2];
    }

    Ok(ReferenceLine {
        points,
        s,
        heading,
        curvature,
        frame,
    })
}

/// Signed curvature of the circle through three points (positive for left turns).
pub fn menger_curvature(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let ab = a.distance(b);
    let bc = b.distance(c);
    let ca = c.distance(a);
    let denom = ab * bc * ca;
    if denom <= f64::MIN_POSITIVE {
        return 0.0;
    }
    2.0 * (b - a).cross(c - b) / denom
}

struct Candidate {
    s: f64,
    dist: f64,
    foot: Vec2,
    frame: f64,
}

impl ReferenceLine {
    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn stations(&self) -> &[f64] {
        &self.s
    }

    pub fn headings(&self) -> &[f64] {
        &self.heading
    }

    pub fn curvatures(&self) -> &[f64] {
        &self.curvature
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> f64 {
        *self.s.last().unwrap()
    }

    /// Largest absolute vertex curvature.
    pub fn max_abs_curvature(&self) -> f64 {
        self.curvature.iter().fold(0.0, |m, k| m.max(k.abs()))
    }

    /// Segment index containing `s` and the fraction along it.
    fn locate(&self, s: f64) -> (usize, f64) {
        let n = self.points.len();
        let idx = match self.s.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let len = self.s[idx + 1] - self.s[idx];
        let u = ((s - self.s[idx]) / len).clamp(0.0, 1.0);
        (idx, u)
    }

    fn frame_at(&self, idx: usize, u: f64) -> f64 {
        self.frame[idx] + u * (self.frame[idx + 1] - self.frame[idx])
    }

    /// Centerline point and frame angle at station `s` (clamped to the line).
    pub fn frame_at_station(&self, s: f64) -> (Vec2, f64) {
        let (i, u) = self.locate(s);
        (
            self.points[i].lerp(self.points[i + 1], u),
            self.frame_at(i, u),
        )
    }

    /// Tangent angle of the centerline frame at `s`, normalized to `[-π, π)`.
    pub fn heading_at(&self, s: f64) -> f64 {
        normalize_angle(self.frame_at_station(s).1)
    }

    /// Curvature at `s`, linearly interpolated between vertices.
    pub fn curvature_at(&self, s: f64) -> f64 {
        let (i, u) = self.locate(s);
        self.curvature[i] + u * (self.curvature[i + 1] - self.curvature[i])
    }

    /// Project a Cartesian point onto the line.
    pub fn to_frenet(&self, p: Vec2) -> Result<FrenetPose, GeometryError> {
        if !p.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        let n = self.points.len();
        // f_i = <p - P_i, T_i> is continuous along the line and decreasing
        // near it; every sign change brackets a frame-normal foot point.
        let f: Vec<f64> = (0..n)
            .map(|i| (p - self.points[i]).dot(Vec2::from_angle(self.frame[i])))
            .collect();

        let mut cands: Vec<Candidate> = Vec::new();
        if f[0] < 0.0 {
            cands.push(Candidate {
                s: 0.0,
                dist: p.distance(self.points[0]),
                foot: self.points[0],
                frame: self.frame[0],
            });
        }
        if f[n - 1] > 0.0 {
            cands.push(Candidate {
                s: self.length(),
                dist: p.distance(self.points[n - 1]),
                foot: self.points[n - 1],
                frame: self.frame[n - 1],
            });
        }
        for i in 0..n - 1 {
            if f[i] >= 0.0 && f[i + 1] <= 0.0 {
                let u = self.solve_foot(i, p, f[i], f[i + 1]);
                let foot = self.points[i].lerp(self.points[i + 1], u);
                cands.push(Candidate {
                    s: self.s[i] + u * (self.s[i + 1] - self.s[i]),
                    dist: p.distance(foot),
                    foot,
                    frame: self.frame_at(i, u),
                });
            }
        }
        if cands.is_empty() {
            // unreachable for finite input: f changes sign or an end candidate exists
            return Err(GeometryError::NonFinite);
        }

        let mut best = 0;
        for (k, c) in cands.iter().enumerate().skip(1) {
            if c.dist < cands[best].dist {
                best = k;
            }
        }
        let b = &cands[best];
        for (k, c) in cands.iter().enumerate() {
            if k != best && (c.dist - b.dist).abs() <= 1e-9 && (c.s - b.s).abs() > 1.0 {
                return Err(GeometryError::AmbiguousProjection { s_a: b.s, s_b: c.s });
            }
        }
        let normal = Vec2::from_angle(b.frame).perp();
        Ok(FrenetPose::new(b.s, (p - b.foot).dot(normal)))
    }

    /// Find u in [0, 1] with <p - P(u), T(u)> = 0 on segment `i`.
    fn solve_foot(&self, i: usize, p: Vec2, f0: f64, f1: f64) -> f64 {
        if f0 == 0.0 {
            return 0.0;
        }
        if f1 == 0.0 {
            return 1.0;
        }
        let a = self.points[i];
        let d = self.points[i + 1] - a;
        let th0 = self.frame[i];
        let dth = self.frame[i + 1] - th0;
        let eval = |u: f64| {
            let th = th0 + u * dth;
            let t = Vec2::from_angle(th);
            let r = p - (a + d * u);
            let val = r.dot(t);
            let deriv = -d.dot(t) + r.dot(t.perp()) * dth;
            (val, deriv)
        };
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        // straight segment frame: closed form
        if dth == 0.0 {
            let t = Vec2::from_angle(th0);
            let den = d.dot(t);
            return ((p - a).dot(t) / den).clamp(0.0, 1.0);
        }
        let mut u = f0 / (f0 - f1);
        for _ in 0..100 {
            let (val, deriv) = eval(u);
            if val == 0.0 {
                return u;
            }
            if val > 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let mut next = if deriv != 0.0 { u - val / deriv } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() <= 1e-15 || hi - lo <= 1e-15 {
                return next;
            }
            u = next;
        }
        u
    }

    /// Map a road-aligned pose to a Cartesian position and heading.
    pub fn from_frenet(&self, pose: &FrenetPose) -> Result<(Vec2, f64), GeometryError> {
        let len = self.length();
        let tol = 1e-9 * len.max(1.0);
        if !(pose.s.is_finite() && pose.l.is_finite() && pose.dl_ds.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if pose.s < -tol || pose.s > len + tol {
            return Err(GeometryError::StationOutOfRange { s: pose.s, length: len });
        }
        let (base, frame) = self.frame_at_station(pose.s);
        let pos = base + Vec2::from_angle(frame).perp() * pose.l;
        Ok((pos, normalize_angle(frame + pose.dl_ds.atan())))
    }

    /// Copy of this line extended straight past its end by `extra` meters.
    pub fn extended(&self, extra: f64) -> ReferenceLine {
        if extra <= MIN_POINT_SPACING {
            return self.clone();
        }
        let n = self.points.len();
        let dir = Vec2::from_angle(self.heading[n - 1]);
        let mut pts = self.points.clone();
        pts.push(self.points[n - 1] + dir * extra);
        let mut out = arc_length_parametrize(&pts).expect("extension of a valid line");
        // the appended straight piece has zero curvature; keep the original
        // end-vertex curvature so the frame matches the source line
        out.curvature[n - 1] = self.curvature[n - 1];
        out.curvature[n] = 0.0;
        out
    }

    /// Mirror image about the x axis (y → −y); turns swap sign.
    pub fn mirrored(&self) -> ReferenceLine {
        ReferenceLine {
            points: self.points.iter().map(|p| Vec2::new(p.x, -p.y)).collect(),
            s: self.s.clone(),
            heading: self.heading.iter().map(|h| -h).collect(),
            curvature: self.curvature.iter().map(|k| -k).collect(),
            frame: self.frame.iter().map(|h| -h).collect(),
        }
    }
}

/// Convex polygon helpers. Vertices are in counter-clockwise or clockwise
/// order; callers normalize through [`Polygon::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<Vec2>,
}

impl Polygon {
    /// Build a polygon, reorienting the vertices counter-clockwise.
    pub fn new(mut vertices: Vec<Vec2>) -> Self {
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        Self { vertices }
    }

    /// Axis-aligned rectangle centered at the origin.
    pub fn rectangle(length: f64, width: f64) -> Self {
        let (hl, hw) = (0.5 * length, 0.5 * width);
        Self {
            vertices: vec![
                Vec2::new(-hl, -hw),
                Vec2::new(hl, -hw),
                Vec2::new(hl, hw),
                Vec2::new(-hl, hw),
            ],
        }
    }

    /// Body-frame polygon placed at `position` rotated by `heading`.
    pub fn transformed(&self, position: Vec2, heading: f64) -> Polygon {
        let (s, c) = heading.sin_cos();
        Polygon {
            vertices: self
                .vertices
                .iter()
                .map(|v| Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y) + position)
                .collect(),
        }
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let mut sign = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let c = self.vertices[(i + 2) % n];
            let cr = (b - a).cross(c - b);
            if cr.abs() <= 1e-12 {
                continue;
            }
            if sign == 0.0 {
                sign = cr.signum();
            } else if cr.signum() != sign {
                return false;
            }
        }
        sign != 0.0
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len() as f64;
        self.vertices.iter().fold(Vec2::ZERO, |acc, v| acc + *v) * (1.0 / n)
    }

    /// Radius of the smallest origin-centered-at-`c` circle covering the polygon.
    pub fn bounding_radius(&self, c: Vec2) -> f64 {
        self.vertices.iter().fold(0.0, |m, v| m.max(v.distance(c)))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            (b - a).cross(p - a) >= 0.0
        })
    }

    /// Distance from a point to the polygon; zero when inside.
    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        let n = self.vertices.len();
        (0..n)
            .map(|i| point_segment_distance(p, self.vertices[i], self.vertices[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Separating-axis overlap test for convex polygons (touching counts).
    pub fn intersects(&self, other: &Polygon) -> bool {
        !has_separating_axis(self, other) && !has_separating_axis(other, self)
    }

    /// Euclidean distance between two convex polygons; zero when they overlap.
    pub fn distance(&self, other: &Polygon) -> f64 {
        if self.intersects(other) {
            return 0.0;
        }
        closest_pair(self, other).0
    }

    /// Distance and the unit direction pointing from `self` towards `other`
    /// along the line of minimum distance. Overlapping polygons report zero
    /// distance and the centroid direction.
    pub fn separation(&self, other: &Polygon) -> (f64, Vec2) {
        if self.intersects(other) {
            let d = other.centroid() - self.centroid();
            let n = d.norm();
            let dir = if n > 0.0 { d * (1.0 / n) } else { Vec2::new(1.0, 0.0) };
            return (0.0, dir);
        }
        let (dist, a, b) = closest_pair(self, other);
        let d = b - a;
        let n = d.norm();
        let dir = if n > 0.0 { d * (1.0 / n) } else { Vec2::new(1.0, 0.0) };
        (dist, dir)
    }
}

fn signed_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>()
}

fn has_separating_axis(a: &Polygon, b: &Polygon) -> bool {
    let n = a.vertices.len();
    for i in 0..n {
        let p = a.vertices[i];
        let q = a.vertices[(i + 1) % n];
        let axis = (q - p).perp();
        let (amin, amax) = project(&a.vertices, axis);
        let (bmin, bmax) = project(&b.vertices, axis);
        if amax < bmin || bmax < amin {
            return true;
        }
    }
    false
}

fn project(v: &[Vec2], axis: Vec2) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p.dot(axis);
        (lo.min(d), hi.max(d))
    })
}

fn closest_pair(a: &Polygon, b: &Polygon) -> (f64, Vec2, Vec2) {
    let mut best = (f64::INFINITY, Vec2::ZERO, Vec2::ZERO);
    for (pts, edges, flip) in [(a, b, false), (b, a, true)] {
        let m = edges.vertices.len();
        for &p in &pts.vertices {
            for j in 0..m {
                let e0 = edges.vertices[j];
                let e1 = edges.vertices[(j + 1) % m];
                let q = closest_point_on_segment(p, e0, e1);
                let d = p.distance(q);
                if d < best.0 {
                    best = if flip { (d, q, p) } else { (d, p, q) };
                }
            }
        }
    }
    best
}

pub fn closest_point_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let d = b - a;
    let len_sq = d.norm_sq();
    if len_sq <= 0.0 {
        return a;
    }
    let t = ((p - a).dot(d) / len_sq).clamp(0.0, 1.0);
    a + d * t
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    p.distance(closest_point_on_segment(p, a, b))
}
