use super::{DecisionContext, DecisionError};

/// Sampled nodes over the s-l sheet. Station 0 holds the single ego node.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub stations: Vec<f64>,
    /// Per station, lateral offsets in ascending order.
    pub samples: Vec<Vec<f64>>,
    /// Virtual lateral offset one spacing behind station 0, carrying the
    /// ego heading into the second-difference cost.
    pub entry_l: f64,
}

impl Lattice {
    pub fn spacing(&self) -> f64 {
        self.stations[1] - self.stations[0]
    }

    pub fn node_count(&self) -> usize {
        self.samples.iter().map(Vec::len).sum()
    }
}

/// Symmetric lateral samples at `spacing`, clipped to `±limit`.
pub fn lateral_samples(count: usize, spacing: f64, limit: f64) -> Vec<f64> {
    let half = (count / 2) as i64;
    (-half..=half)
        .map(|k| k as f64 * spacing)
        .filter(|l| l.abs() <= limit + 1e-9)
        .collect()
}

pub fn build_lattice(ctx: &DecisionContext) -> Result<Lattice, DecisionError> {
    let limit = ctx.road_half_width - 0.5 * ctx.vehicle.width;
    if limit < 0.0 {
        return Err(DecisionError::NoRoom {
            half_width: ctx.road_half_width,
            needed: 0.5 * ctx.vehicle.width,
        });
    }
    let ds = ctx.path_spacing();
    let n = ctx.config.path.grid_count;
    let horizon_end = ctx.ego.s + (n - 1) as f64 * ds;
    let end = if ctx.through_goal {
        horizon_end
    } else {
        horizon_end.min(ctx.goal_s)
    };
    let m = (((end - ctx.ego.s) / ds + 1e-9).floor().max(0.0) as usize + 1).clamp(2, n);
    let dc = &ctx.config.decision;
    let count = dc.lateral_sample_count | 1;
    let row = lateral_samples(count, dc.lateral_sample_spacing, limit);
    let mut samples = vec![vec![ctx.ego.l]];
    samples.extend(std::iter::repeat(row).take(m - 1));
    Ok(Lattice {
        stations: (0..m).map(|k| ctx.ego.s + k as f64 * ds).collect(),
        samples,
        entry_l: ctx.ego.l - ctx.ego.dl_ds * ds,
    })
}
