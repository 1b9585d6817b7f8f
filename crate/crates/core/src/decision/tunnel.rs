use super::{CoarseTrajectory, DecisionContext, DecisionError, DecisionLabel, ObstacleView};

/// Lateral bounds per path station.
#[derive(Debug, Clone, PartialEq)]
pub struct Tunnel {
    pub stations: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tunnel {
    pub fn open(stations: Vec<f64>, half_width: f64) -> Self {
        let n = stations.len();
        Self {
            stations,
            lower: vec![-half_width; n],
            upper: vec![half_width; n],
        }
    }

    /// Narrow the bounds on stations whose half-cell meets `[s_min, s_max]`.
    /// `side` > 0 raises the lower bound to `l`, otherwise lowers the upper.
    pub fn tighten(&mut self, s_min: f64, s_max: f64, l: f64, side: i8) {
        let n = self.stations.len();
        for i in 0..n {
            let s = self.stations[i];
            let left = if i == 0 { s } else { 0.5 * (self.stations[i - 1] + s) };
            let right = if i + 1 == n { s } else { 0.5 * (s + self.stations[i + 1]) };
            if right < s_min || left > s_max {
                continue;
            }
            if side > 0 {
                self.lower[i] = self.lower[i].max(l);
            } else {
                self.upper[i] = self.upper[i].min(l);
            }
        }
    }
}

/// Road bounds tightened by every bypassed obstacle.
pub fn extract_tunnel(
    coarse: &CoarseTrajectory,
    views: &[ObstacleView],
    ctx: &DecisionContext,
) -> Result<Tunnel, DecisionError> {
    let stations = ctx.path_stations();
    let mut tunnel = Tunnel::open(stations.clone(), ctx.road_half_width);
    let margin = ctx.config.decision.lateral_margin;
    for v in views {
        let label = coarse.decisions.get(&v.prediction.obstacle_id).copied();
        let side = match label {
            Some(DecisionLabel::BypassLeft) => 1,
            Some(DecisionLabel::BypassRight) => -1,
            _ => continue,
        };
        for (i, b) in v.raw_boxes.iter().enumerate() {
            let Some(b) = b else { continue };
            // only the station whose nominal time the box belongs to
            let s = stations[i];
            let ds = ctx.path_spacing();
            if b.s_max < s - 0.5 * ds || b.s_min > s + 0.5 * ds {
                continue;
            }
            if side > 0 {
                tunnel.lower[i] = tunnel.lower[i].max(b.l_max + margin);
            } else {
                tunnel.upper[i] = tunnel.upper[i].min(b.l_min - margin);
            }
        }
    }
    for i in 0..stations.len() {
        let (lo, hi) = (tunnel.lower[i], tunnel.upper[i]);
        let node = coarse.nodes.get(i).map(|n| n.1);
        let contained = node.map_or(true, |l| l >= lo + 0.01 && l <= hi - 0.01);
        if lo >= hi || !contained {
            return Err(DecisionError::TunnelCollapse { s: stations[i], lower: lo, upper: hi });
        }
    }
    Ok(tunnel)
}
