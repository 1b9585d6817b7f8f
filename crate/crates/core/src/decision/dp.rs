use std::cmp::Ordering;

use super::{DecisionContext, DecisionError, FrenetBox, Lattice, ObstacleClass, ObstacleView};

/// Obstacle box active on the edge into a station, with its position
/// standard deviation at that station's nominal time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskBox {
    pub bbox: FrenetBox,
    pub sigma: f64,
}

/// Edge costs for the lattice search.
#[derive(Debug, Clone, PartialEq)]
pub struct DpCostModel {
    /// Station of lattice column 0.
    pub origin: f64,
    pub spacing: f64,
    pub w_ref: f64,
    pub w_smooth: f64,
    pub w_kappa: f64,
    pub w_obs: f64,
    pub sigma_geom: f64,
    pub half_width: f64,
    /// Per station, the boxes checked on edges ending there.
    pub fields: Vec<Vec<RiskBox>>,
}

impl DpCostModel {
    pub fn new(lattice: &Lattice, views: &[ObstacleView], ctx: &DecisionContext) -> Self {
        let dc = &ctx.config.decision;
        let fields = (0..lattice.stations.len())
            .map(|k| {
                views
                    .iter()
                    .filter(|v| v.class == ObstacleClass::Lateral)
                    .filter_map(|v| {
                        v.station_boxes[k].map(|bbox| RiskBox {
                            bbox,
                            sigma: v.sigmas[k],
                        })
                    })
                    .collect()
            })
            .collect();
        Self {
            origin: lattice.stations[0],
            spacing: lattice.spacing(),
            w_ref: dc.w_ref,
            w_smooth: dc.w_smooth,
            w_kappa: dc.w_kappa,
            w_obs: dc.w_obs,
            sigma_geom: dc.sigma_geom,
            half_width: 0.5 * ctx.vehicle.width,
            fields,
        }
    }

    /// Cost of the edge into station `k` at `l_c`, from `l_p` at k − 1,
    /// with `l_pp` at k − 2.
    pub fn edge_cost(&self, k: usize, l_pp: f64, l_p: f64, l_c: f64) -> f64 {
        let ds = self.spacing;
        let d1 = (l_c - l_p) / ds;
        let d2 = (l_c - 2.0 * l_p + l_pp) / (ds * ds);
        let mut cost = self.w_ref * l_c * l_c + self.w_smooth * d1 * d1 + self.w_kappa * d2 * d2;
        let s1 = self.origin + k as f64 * ds;
        for r in &self.fields[k] {
            let d = r.bbox.segment_distance(s1 - ds, l_p, s1, l_c) - self.half_width;
            if d < 0.0 {
                return f64::INFINITY;
            }
            let sig = self.sigma_geom + r.sigma;
            cost += self.w_obs * (-(d * d) / (2.0 * sig * sig)).exp();
        }
        cost
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpResult {
    /// Chosen lateral offset per station.
    pub nodes: Vec<f64>,
    /// Chosen sample index per station.
    pub indices: Vec<usize>,
    pub cost: f64,
}

/// Centerline first, then rightmost.
fn key_cmp(a: f64, b: f64) -> Ordering {
    (a.abs(), a).partial_cmp(&(b.abs(), b)).unwrap_or(Ordering::Equal)
}

fn key_order(samples: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| key_cmp(samples[a], samples[b]));
    idx
}

/// Minimum-cost node sequence over the lattice.
///
/// States are (station, current node, previous node) so the second
/// difference can be costed. Among equal-cost predecessors the one with the
/// smaller |l|, then smaller l, wins; the terminal state is chosen the same
/// way on (current, previous).
pub fn dp_search(lattice: &Lattice, model: &DpCostModel) -> Result<DpResult, DecisionError> {
    let m = lattice.stations.len();
    let smp = &lattice.samples;
    // cost[k][c * K_{k-1} + p]
    let mut cost: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut back: Vec<Vec<usize>> = vec![Vec::new(); m];
    let orders: Vec<Vec<usize>> = smp.iter().map(|s| key_order(s)).collect();

    cost[1] = smp[1]
        .iter()
        .flat_map(|&lc| smp[0].iter().map(move |&lp| (lp, lc)))
        .map(|(lp, lc)| model.edge_cost(1, lattice.entry_l, lp, lc))
        .collect();
    back[1] = vec![0; cost[1].len()];

    for k in 2..m {
        let (kc, kp, kq) = (smp[k].len(), smp[k - 1].len(), smp[k - 2].len());
        let mut ck = vec![f64::INFINITY; kc * kp];
        let mut bk = vec![0usize; kc * kp];
        for c in 0..kc {
            let lc = smp[k][c];
            for p in 0..kp {
                let lp = smp[k - 1][p];
                let mut best = f64::INFINITY;
                let mut arg = orders[k - 2][0];
                for &q in &orders[k - 2] {
                    let prev = cost[k - 1][p * kq + q];
                    if prev == f64::INFINITY {
                        continue;
                    }
                    let v = prev + model.edge_cost(k, smp[k - 2][q], lp, lc);
                    if v < best {
                        best = v;
                        arg = q;
                    }
                }
                ck[c * kp + p] = best;
                bk[c * kp + p] = arg;
            }
        }
        cost[k] = ck;
        back[k] = bk;
    }

    let last = m - 1;
    let kp = smp[last - 1].len();
    let mut best = f64::INFINITY;
    let mut arg = (0, 0);
    for &c in &orders[last] {
        for &p in &orders[last - 1] {
            let v = cost[last][c * kp + p];
            if v < best {
                best = v;
                arg = (c, p);
            }
        }
    }
    if best == f64::INFINITY {
        return Err(DecisionError::AllBlocked);
    }

    let mut indices = vec![0usize; m];
    indices[last] = arg.0;
    indices[last - 1] = arg.1;
    for k in (2..m).rev() {
        let kp = smp[k - 1].len();
        indices[k - 2] = back[k][indices[k] * kp + indices[k - 1]];
    }
    Ok(DpResult {
        nodes: indices.iter().enumerate().map(|(k, &i)| smp[k][i]).collect(),
        indices,
        cost: best,
    })
}
