//! Quadratic programs over grid values: the weighted multi-reference
//! objective, linear constraint builders for path and speed planning, and a
//! convex QP solver.

mod band;
pub mod constraints;
pub mod objective;
pub mod solver;

pub use band::{BandLdl, DenseLdl, SymBand};
pub use constraints::{
    build_path_constraints, build_speed_constraints, CircleCover, ConstraintError, SpeedStart,
};
pub use objective::{build_objective, History, Objective, ObjectiveError, ReferenceProfile, ReferenceProfileSet};
pub use solver::{solve_qp, QpSolution, QpStatus, SolverSettings, WarmStart};

/// Two-sided linear constraint `lower <= coeffs · y[start..start + coeffs.len()] <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub start: usize,
    pub coeffs: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl ConstraintRow {
    pub fn new(start: usize, coeffs: Vec<f64>, lower: f64, upper: f64) -> Self {
        Self {
            start,
            coeffs,
            lower,
            upper,
        }
    }

    /// Bound on a single variable.
    pub fn bound(index: usize, lower: f64, upper: f64) -> Self {
        Self::new(index, vec![1.0], lower, upper)
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .zip(&y[self.start..self.start + self.coeffs.len()])
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Amount by which `y` violates this row (zero when satisfied).
    pub fn violation(&self, y: &[f64]) -> f64 {
        let v = self.eval(y);
        (self.lower - v).max(v - self.upper).max(0.0)
    }

    pub fn end(&self) -> usize {
        self.start + self.coeffs.len()
    }
}

/// `minimize ½yᵀHy + gᵀy + constant` subject to the constraint rows.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: SymBand,
    pub linear: Vec<f64>,
    pub constant: f64,
    pub rows: Vec<ConstraintRow>,
}

impl QpProblem {
    pub fn new(objective: Objective, rows: Vec<ConstraintRow>) -> Self {
        Self {
            hessian: objective.hessian,
            linear: objective.linear,
            constant: objective.constant,
            rows,
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, y: &[f64]) -> f64 {
        self.hessian.half_quad(y) + self.linear.iter().zip(y).map(|(g, v)| g * v).sum::<f64>() + self.constant
    }

    /// Structural checks: shapes, symmetric PSD Hessian, ordered bounds.
    pub fn violations(&self) -> Vec<String> {
        let n = self.dim();
        let mut out = Vec::new();
        if self.hessian.dim() != n {
            out.push(format!("hessian is {}x{}, linear term has {n}", self.hessian.dim(), self.hessian.dim()));
        }
        if !self.hessian.is_finite() || self.linear.iter().any(|v| !v.is_finite()) {
            out.push("non-finite objective".to_string());
        } else if self.hessian.dim() == n && self.hessian.min_pivot(1e-12) < -1e-10 {
            out.push("hessian is not positive semidefinite".to_string());
        }
        for (k, r) in self.rows.iter().enumerate() {
            if r.end() > n || r.coeffs.is_empty() {
                out.push(format!("row {k} out of range"));
            }
            if r.lower.is_nan() || r.upper.is_nan() || r.coeffs.iter().any(|c| !c.is_finite()) {
                out.push(format!("row {k} has non-finite data"));
            }
            if r.lower > r.upper {
                out.push(format!("row {k} has lower bound above upper bound"));
            }
        }
        out
    }
}
