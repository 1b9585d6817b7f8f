//! Weighted multi-reference quadratic objective over grid values.
//!
//! ```text
//! J(y) = Σ_k Σ_i Σ_j w[k][j][i] · (y_i^(j) − ref[k][j][i])²
//! ```
//!
//! Derivatives are backward differences on a uniform grid. Grid indices
//! below the first one are taken from a fixed [`History`], so their
//! contribution moves into the linear and constant terms.

use thiserror::Error;

use super::band::SymBand;

/// Backward-difference stencils, scaled by `delta^-j` at use.
const STENCILS: [&[f64]; 4] = [&[1.0], &[1.0, -1.0], &[1.0, -2.0, 1.0], &[1.0, -3.0, 3.0, -1.0]];

pub const MIN_GRID: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid reference profiles: {0}")]
    InvalidProfile(String),
}

/// Targets and weights for one reference profile. Index `[j][i]` is the
/// j-th derivative at grid point i (0-based here, the first grid value
/// being the pinned start).
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceProfile {
    pub refs: [Vec<f64>; 4],
    pub weights: [Vec<f64>; 4],
}

impl ReferenceProfile {
    pub fn zeros(n: usize) -> Self {
        Self {
            refs: std::array::from_fn(|_| vec![0.0; n]),
            weights: std::array::from_fn(|_| vec![0.0; n]),
        }
    }

    /// Uniform weight `w` on order `j` with the given targets.
    pub fn with_order(mut self, j: usize, targets: Vec<f64>, w: f64) -> Self {
        self.weights[j] = vec![w; targets.len()];
        self.refs[j] = targets;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferenceProfileSet {
    pub profiles: Vec<ReferenceProfile>,
}

impl ReferenceProfileSet {
    pub fn new(profiles: Vec<ReferenceProfile>) -> Self {
        Self { profiles }
    }

    pub fn validate(&self, n: usize) -> Result<(), ObjectiveError> {
        let mut anchored = false;
        for (k, p) in self.profiles.iter().enumerate() {
            for j in 0..4 {
                if p.refs[j].len() != n || p.weights[j].len() != n {
                    return Err(ObjectiveError::ShapeMismatch(format!(
                        "profile {k} order {j}: expected {n} entries, got {} refs and {} weights",
                        p.refs[j].len(),
                        p.weights[j].len()
                    )));
                }
                if p.weights[j].iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                    return Err(ObjectiveError::InvalidProfile(format!(
                        "profile {k} order {j} has a negative or non-finite weight"
                    )));
                }
                if p.refs[j].iter().any(|r| !r.is_finite()) {
                    return Err(ObjectiveError::InvalidProfile(format!(
                        "profile {k} order {j} has a non-finite target"
                    )));
                }
            }
            anchored |= p.weights[0].iter().any(|w| *w > 0.0);
        }
        if !anchored {
            return Err(ObjectiveError::InvalidProfile(
                "no positive weight on the value itself".to_string(),
            ));
        }
        Ok(())
    }
}

/// Values standing in for grid indices before the first one:
/// `values[m]` is y at index −(m + 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct History {
    pub values: [f64; 3],
}

impl History {
    /// History of a cubic `y(t) = y0 + d1·t + d2·t²/2 + d3·t³/6` sampled backward.
    pub fn from_state(y0: f64, d1: f64, d2: f64, d3: f64, delta: f64) -> Self {
        let at = |t: f64| y0 + d1 * t + 0.5 * d2 * t * t + d3 * t * t * t / 6.0;
        Self {
            values: [at(-delta), at(-2.0 * delta), at(-3.0 * delta)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub hessian: SymBand,
    pub linear: Vec<f64>,
    pub constant: f64,
}

impl Objective {
    pub fn value(&self, y: &[f64]) -> f64 {
        self.hessian.half_quad(y) + self.linear.iter().zip(y).map(|(g, v)| g * v).sum::<f64>() + self.constant
    }

    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; y.len()];
        self.hessian.matvec(y, &mut g);
        for (a, b) in g.iter_mut().zip(&self.linear) {
            *a += b;
        }
        g
    }
}

/// Assemble `½yᵀHy + gᵀy + c` reproducing J exactly.
pub fn build_objective(
    refs: &ReferenceProfileSet,
    n: usize,
    delta: f64,
    history: &History,
) -> Result<Objective, ObjectiveError> {
    if n < MIN_GRID {
        return Err(ObjectiveError::ShapeMismatch(format!("grid size {n} below {MIN_GRID}")));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(ObjectiveError::ShapeMismatch(format!("grid spacing {delta} must be positive")));
    }
    refs.validate(n)?;

    let mut h = SymBand::zeros(n, 3);
    let mut g = vec![0.0; n];
    let mut c = 0.0;
    // free indices and their coefficients for one stencil row
    let mut idx = [0usize; 4];
    let mut coef = [0.0f64; 4];

    for p in &refs.profiles {
        for (j, stencil) in STENCILS.iter().enumerate() {
            let scale = delta.powi(-(j as i32));
            for i in 0..n {
                let w = p.weights[j][i];
                if w == 0.0 {
                    continue;
                }
                let mut cnt = 0;
                let mut b = -p.refs[j][i];
                for (m, s) in stencil.iter().enumerate() {
                    let a = s * scale;
                    if m <= i {
                        idx[cnt] = i - m;
                        coef[cnt] = a;
                        cnt += 1;
                    } else {
                        b += a * history.values[m - i - 1];
                    }
                }
                for u in 0..cnt {
                    g[idx[u]] += 2.0 * w * b * coef[u];
                    for v in 0..=u {
                        h.add(idx[v], idx[u], 2.0 * w * coef[u] * coef[v]);
                    }
                }
                c += w * b * b;
            }
        }
    }
    Ok(Objective {
        hessian: h,
        linear: g,
        constant: c,
    })
}

/// Evaluate J term by term.
pub fn evaluate_direct(refs: &ReferenceProfileSet, y: &[f64], delta: f64, history: &History) -> f64 {
    let n = y.len();
    let at = |k: isize| -> f64 {
        if k >= 0 {
            y[k as usize]
        } else {
            history.values[(-k - 1) as usize]
        }
    };
    let mut total = 0.0;
    for p in &refs.profiles {
        for (j, stencil) in STENCILS.iter().enumerate() {
            let scale = delta.powi(-(j as i32));
            for i in 0..n {
                let w = p.weights[j][i];
                if w == 0.0 {
                    continue;
                }
                let d: f64 = stencil
                    .iter()
                    .enumerate()
                    .map(|(m, s)| s * at(i as isize - m as isize))
                    .sum::<f64>()
                    * scale;
                total += w * (d - p.refs[j][i]).powi(2);
            }
        }
    }
    total
}
