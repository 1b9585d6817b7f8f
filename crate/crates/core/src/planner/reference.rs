//! Jerk- and acceleration-limited speed reference.

/// Limits for the reference tracker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampLimits {
    pub max_accel: f64,
    pub max_decel: f64,
    pub max_jerk: f64,
}

/// Longitudinal state sampled at a fixed step.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedReference {
    pub step: f64,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl SpeedReference {
    fn index(&self, t: f64) -> usize {
        ((t / self.step).round().max(0.0) as usize).min(self.s.len() - 1)
    }

    pub fn s_at(&self, t: f64) -> f64 {
        self.s[self.index(t)]
    }

    pub fn v_at(&self, t: f64) -> f64 {
        self.v[self.index(t)]
    }

    pub fn a_at(&self, t: f64) -> f64 {
        self.a[self.index(t)]
    }
}

pub const REFERENCE_STEP: f64 = 1e-3;

/// Simulate a tracker that drives the speed toward `target(t, s, v, a)` as fast
/// as the limits allow, easing acceleration out early enough to land on
/// the target without overshoot.
pub fn track_speed(
    s0: f64,
    v0: f64,
    a0: f64,
    horizon: f64,
    limits: RampLimits,
    mut target: impl FnMut(f64, f64, f64, f64) -> f64,
) -> SpeedReference {
    let dt = REFERENCE_STEP;
    let steps = (horizon / dt).round() as usize;
    let j = limits.max_jerk;
    let mut s = s0;
    let mut v = v0.max(0.0);
    // a start harder than the decel limit is released at the jerk limit
    let mut floor = (-a0).max(limits.max_decel);
    let mut a = a0.clamp(-floor, limits.max_accel);
    let mut out = SpeedReference {
        step: dt,
        s: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
        a: Vec::with_capacity(steps + 1),
    };
    for k in 0..=steps {
        out.s.push(s);
        out.v.push(v);
        out.a.push(a);
        if k == steps {
            break;
        }
        let t = k as f64 * dt;
        let vt = target(t, s, v, a).max(0.0);
        // speed reached if acceleration is brought to zero at full jerk from now
        let v_settle = v + a * a.abs() / (2.0 * j);
        let jerk = if (v - vt).abs() < 1e-4 && a.abs() <= j * dt {
            -a / dt
        } else if v_settle < vt {
            j
        } else {
            -j
        };
        let a_next = (a + jerk * dt).clamp(-floor, limits.max_accel);
        floor = floor.min((-a_next).max(limits.max_decel));
        let mut v_next = v + 0.5 * (a + a_next) * dt;
        if v_next < 0.0 {
            v_next = 0.0;
        }
        s += 0.5 * (v + v_next) * dt;
        v = v_next;
        a = if v == 0.0 && a_next < 0.0 { 0.0 } else { a_next };
    }
    out
}
