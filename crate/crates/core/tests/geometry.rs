mod common;

use corridor_planner::geometry::{arc_length_parametrize, FrenetPose, ReferenceLine, Vec2};
use proptest::prelude::*;

use common::{rect, signed_clearance};

fn arc(radius: f64, degrees: usize, step_deg: f64) -> ReferenceLine {
    let pts: Vec<Vec2> = (0..=((degrees as f64 / step_deg) as usize))
        .map(|i| {
            let a = (i as f64 * step_deg).to_radians();
            Vec2::new(radius * a.sin(), radius * (1.0 - a.cos()))
        })
        .collect();
    arc_length_parametrize(&pts).unwrap()
}

#[test]
fn sampled_circle_curvature() {
    for &(r, step) in &[(5.0, 1.0), (5.0, 2.0), (20.0, 1.0), (50.0, 0.5)] {
        let line = arc(r, 90, step);
        let n = line.len();
        for &k in &line.curvatures()[1..n - 1] {
            assert!((k - 1.0 / r).abs() <= 1e-3, "r={r} step={step}: {k}");
        }
    }
}

#[test]
fn straight_line_frame() {
    let line = arc_length_parametrize(&[Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(20.0, 0.0)]).unwrap();
    let f = line.to_frenet(Vec2::new(7.5, -1.25)).unwrap();
    assert!((f.s - 7.5).abs() < 1e-12);
    assert!((f.l + 1.25).abs() < 1e-12);
    assert!((line.length() - 20.0).abs() < 1e-12);
}

#[test]
fn degenerate_polyline_rejected() {
    assert!(arc_length_parametrize(&[Vec2::new(1.0, 1.0)]).is_err());
    assert!(arc_length_parametrize(&[Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0)]).is_err());
}

proptest! {
    #[test]
    fn frenet_round_trip_on_arc(radius in 8.0..60.0_f64, u in 0.1..0.9_f64, l in -2.0..2.0_f64) {
        let line = arc(radius, 90, 1.0);
        let s = u * line.length();
        let (p, _) = line.from_frenet(&FrenetPose::new(s, l)).unwrap();
        let back = line.to_frenet(p).unwrap();
        prop_assert!((back.s - s).abs() < 1e-6, "s {} vs {}", back.s, s);
        prop_assert!((back.l - l).abs() < 1e-6, "l {} vs {}", back.l, l);
    }

    #[test]
    fn polygon_distance_agrees_with_separating_axes(
        ax in -5.0..5.0_f64, ay in -5.0..5.0_f64, ah in -3.2..3.2_f64,
        bx in -5.0..5.0_f64, by in -5.0..5.0_f64, bh in -3.2..3.2_f64,
        al in 0.5..4.0_f64, aw in 0.5..2.0_f64, bl in 0.5..4.0_f64, bw in 0.5..2.0_f64,
    ) {
        let a = rect(ax, ay, ah, al, aw);
        let b = rect(bx, by, bh, bl, bw);
        let sat = signed_clearance(&a, &b);
        if sat > 1e-9 {
            prop_assert!(!a.intersects(&b));
            // the axis gap is a lower bound on the true distance
            prop_assert!(a.distance(&b) >= sat - 1e-9);
        } else if sat < -1e-9 {
            prop_assert!(a.intersects(&b));
            prop_assert!(a.distance(&b) == 0.0);
        }
    }

    #[test]
    fn rectangle_area_and_containment(l in 0.5..6.0_f64, w in 0.5..3.0_f64, x in -10.0..10.0_f64, y in -10.0..10.0_f64, h in -3.2..3.2_f64) {
        let p = rect(x, y, h, l, w);
        prop_assert!((p.area().abs() - l * w).abs() < 1e-9);
        prop_assert!(p.is_convex());
        prop_assert!(p.contains(Vec2::new(x, y)));
        let far = Vec2::new(x, y) + Vec2::from_angle(h) * (l / 2.0 + 0.1);
        prop_assert!(!p.contains(far));
    }
}
