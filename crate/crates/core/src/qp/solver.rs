//! Operator-splitting (ADMM) solver for convex QPs with two-sided linear
//! constraints, in the style of OSQP:
//!
//! ```text
//! minimize ½xᵀPx + qᵀx   subject to   l <= Ax <= u
//! ```
//!
//! The problem is Ruiz-equilibrated, the reduced KKT matrix `P + σI + AᵀRA`
//! is banded and factorized once per step-size change, and step sizes adapt
//! to the primal/dual residual balance. Once the active set settles, a
//! polishing step solves the equality-constrained KKT system on the guessed
//! active set; the polished point is accepted only if it certifies primal
//! feasibility, dual sign feasibility and stationarity.

use std::time::Instant;

use super::band::{BandLdl, DenseLdl, SymBand};
use super::{ConstraintRow, QpProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub tol_prim: f64,
    pub tol_dual: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Iterations between residual checks, step-size updates and polish attempts.
    pub check_interval: usize,
    pub polish: bool,
    pub scaling_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_prim: 1e-4,
            tol_dual: 1e-4,
            max_iter: 2000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            check_interval: 25,
            polish: true,
            scaling_iters: 10,
        }
    }
}

impl SolverSettings {
    pub fn with_tolerances(tol_prim: f64, tol_dual: f64, max_iter: usize) -> Self {
        Self {
            tol_prim,
            tol_dual,
            max_iter,
            ..Self::default()
        }
    }
}

/// Primal/dual iterate carried from one solve to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub y: Vec<f64>,
    pub status: QpStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective_value: f64,
    pub iterations: usize,
    pub solve_time: f64,
    /// Constraint multipliers (positive on active upper bounds).
    pub duals: Vec<f64>,
    pub polished: bool,
}

impl QpSolution {
    pub fn warm_start(&self, problem: &QpProblem) -> WarmStart {
        WarmStart {
            x: self.y.clone(),
            z: problem.rows.iter().map(|r| r.eval(&self.y)).collect(),
            y: self.duals.clone(),
        }
    }
}

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const INF_BOUND: f64 = 1e20;
const INFEAS_TOL: f64 = 1e-6;

struct Scaled {
    p: SymBand,
    q: Vec<f64>,
    rows: Vec<ConstraintRow>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn clamp_bound(v: f64) -> f64 {
    v.clamp(-INF_BOUND, INF_BOUND)
}

fn scale_problem(p: &QpProblem, iters: usize) -> Scaled {
    let n = p.dim();
    let m = p.rows.len();
    let mut ps = p.hessian.clone();
    let mut q = p.linear.clone();
    let mut rows: Vec<ConstraintRow> = p.rows.clone();
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    let bw = ps.bandwidth();

    for _ in 0..iters {
        let mut col = vec![0.0_f64; n];
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                let v = ps.get(i, j).abs();
                col[i] = col[i].max(v);
                col[j] = col[j].max(v);
            }
        }
        for r in &rows {
            for (k, a) in r.coeffs.iter().enumerate() {
                col[r.start + k] = col[r.start + k].max(a.abs());
            }
        }
        let dd: Vec<f64> = col
            .iter()
            .map(|&c| if c < 1e-8 { 1.0 } else { 1.0 / c.sqrt() })
            .collect();
        let ee: Vec<f64> = rows
            .iter()
            .map(|r| {
                let c = r
                    .coeffs
                    .iter()
                    .enumerate()
                    .fold(0.0_f64, |acc, (k, a)| acc.max((a * dd[r.start + k]).abs()));
                if c < 1e-8 {
                    1.0
                } else {
                    1.0 / c.sqrt()
                }
            })
            .collect();
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                let v = ps.get(i, j);
                if v != 0.0 {
                    let scaled = v * dd[i] * dd[j];
                    ps.add(i, j, scaled - v);
                }
            }
            q[i] *= dd[i];
            d[i] *= dd[i];
        }
        for (ri, r) in rows.iter_mut().enumerate() {
            for (k, a) in r.coeffs.iter_mut().enumerate() {
                *a *= ee[ri] * dd[r.start + k];
            }
            e[ri] *= ee[ri];
        }
    }

    // cost scaling
    let mut col_mean = 0.0;
    if n > 0 {
        let mut col = vec![0.0_f64; n];
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                let v = ps.get(i, j).abs();
                col[i] = col[i].max(v);
                col[j] = col[j].max(v);
            }
        }
        col_mean = col.iter().sum::<f64>() / n as f64;
    }
    let base = col_mean.max(inf_norm(&q));
    let c = if base < 1e-8 { 1.0 } else { (1.0 / base).clamp(1e-4, 1e4) };
    ps.scale(c);
    q.iter_mut().for_each(|v| *v *= c);

    for (ri, r) in rows.iter_mut().enumerate() {
        r.lower = clamp_bound(r.lower) * e[ri];
        r.upper = clamp_bound(r.upper) * e[ri];
        if p.rows[ri].lower == f64::NEG_INFINITY {
            r.lower = f64::NEG_INFINITY;
        }
        if p.rows[ri].upper == f64::INFINITY {
            r.upper = f64::INFINITY;
        }
    }
    Scaled { p: ps, q, rows, d, e, c }
}

fn mat_a(rows: &[ConstraintRow], x: &[f64], out: &mut [f64]) {
    for (o, r) in out.iter_mut().zip(rows) {
        *o = r.eval(x);
    }
}

fn mat_at(rows: &[ConstraintRow], y: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (r, &yi) in rows.iter().zip(y) {
        if yi == 0.0 {
            continue;
        }
        for (k, a) in r.coeffs.iter().enumerate() {
            out[r.start + k] += a * yi;
        }
    }
}

fn kkt_factor(s: &Scaled, sigma: f64, rho: &[f64]) -> Option<BandLdl> {
    let n = s.q.len();
    let span = s.rows.iter().map(|r| r.coeffs.len()).max().unwrap_or(1);
    let bw = s.p.bandwidth().max(span.saturating_sub(1));
    let mut k = s.p.widened(bw);
    for i in 0..n {
        k.add(i, i, sigma);
    }
    for (r, &rh) in s.rows.iter().zip(rho) {
        for (a, &ca) in r.coeffs.iter().enumerate() {
            for (b, &cb) in r.coeffs.iter().enumerate().take(a + 1) {
                k.add(r.start + a, r.start + b, rh * ca * cb);
            }
        }
    }
    k.ldl()
}

fn row_rho(rows: &[ConstraintRow], rho: f64) -> Vec<f64> {
    rows.iter()
        .map(|r| {
            if r.lower == r.upper {
                RHO_EQ_FACTOR * rho
            } else {
                rho
            }
        })
        .collect()
}

/// Residuals of an unscaled candidate (x, y): max row violation, stationarity.
/// Active-set corrections tried by one polish attempt.
const POLISH_ROUNDS: usize = 8;

fn certify(p: &QpProblem, x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = p.dim();
    let prim = p.rows.iter().fold(0.0_f64, |m, r| m.max(r.violation(x)));
    let mut grad = vec![0.0; n];
    p.hessian.matvec(x, &mut grad);
    for i in 0..n {
        grad[i] += p.linear[i];
    }
    let mut aty = vec![0.0; n];
    mat_at(&p.rows, y, &mut aty);
    let dual = grad.iter().zip(&aty).fold(0.0_f64, |m, (g, a)| m.max((g + a).abs()));
    (prim, dual)
}

/// Equality-constrained KKT solve on a guessed active set.
fn polish(p: &QpProblem, active: &[(usize, f64)]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = p.dim();
    let m = active.len();
    let size = n + m;
    let delta = 1e-9;
    let mut k = vec![0.0; size * size];
    let bw = p.hessian.bandwidth();
    for i in 0..n {
        for j in i.saturating_sub(bw)..=i {
            let v = p.hessian.get(i, j);
            k[i * size + j] = v;
            k[j * size + i] = v;
        }
        k[i * size + i] += delta;
    }
    for (a, &(ri, _)) in active.iter().enumerate() {
        let r = &p.rows[ri];
        for (c, coef) in r.coeffs.iter().enumerate() {
            k[(n + a) * size + r.start + c] = *coef;
            k[(r.start + c) * size + n + a] = *coef;
        }
        k[(n + a) * size + n + a] = -delta;
    }
    let f = DenseLdl::factor(&k, size)?;
    let mut rhs = vec![0.0; size];
    for i in 0..n {
        rhs[i] = -p.linear[i];
    }
    for (a, &(_, b)) in active.iter().enumerate() {
        rhs[n + a] = b;
    }
    let mut sol = rhs.clone();
    f.solve(&mut sol);
    // iterative refinement against the unregularized system
    for _ in 0..5 {
        let mut res = rhs.clone();
        for i in 0..size {
            let mut v = 0.0;
            for j in 0..size {
                let mut kij = k[i * size + j];
                if i == j {
                    kij += if i < n { -delta } else { delta };
                }
                v += kij * sol[j];
            }
            res[i] -= v;
        }
        if inf_norm(&res) < 1e-13 {
            break;
        }
        f.solve(&mut res);
        for (s, r) in sol.iter_mut().zip(&res) {
            *s += r;
        }
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol[..n].to_vec();
    let mut y = vec![0.0; p.rows.len()];
    for (a, &(ri, _)) in active.iter().enumerate() {
        y[ri] = sol[n + a];
    }
    Some((x, y))
}

/// Solve a convex QP.
pub fn solve_qp(problem: &QpProblem, settings: &SolverSettings, warm: Option<&WarmStart>) -> QpSolution {
    let start = Instant::now();
    let n = problem.dim();
    let m = problem.rows.len();
    let finish = |y: Vec<f64>, duals: Vec<f64>, status: QpStatus, prim: f64, dual: f64, iters: usize, polished: bool| {
        let objective_value = problem.objective(&y);
        QpSolution {
            y,
            status,
            primal_residual: prim,
            dual_residual: dual,
            objective_value,
            iterations: iters,
            solve_time: start.elapsed().as_secs_f64(),
            duals,
            polished,
        }
    };

    if problem.rows.iter().any(|r| r.lower > r.upper) {
        return finish(vec![0.0; n], vec![0.0; m], QpStatus::Infeasible, f64::INFINITY, f64::INFINITY, 0, false);
    }

    let try_polish = |z: &[f64], y: &[f64]| -> Option<(Vec<f64>, Vec<f64>, f64, f64)> {
        let mut active = Vec::new();
        for (i, r) in problem.rows.iter().enumerate() {
            if r.lower == r.upper {
                active.push((i, r.lower));
            } else if z[i] - r.lower < -y[i] {
                active.push((i, r.lower));
            } else if r.upper - z[i] < y[i] {
                active.push((i, r.upper));
            }
        }
        // correct the guess: release rows whose multipliers have the wrong
        // sign, enforce rows the candidate violates
        for _ in 0..POLISH_ROUNDS {
            let (px, py) = polish(problem, &active)?;
            let mut next = Vec::with_capacity(active.len());
            let mut changed = false;
            for &(i, b) in &active {
                let r = &problem.rows[i];
                let wrong = r.lower != r.upper
                    && ((b == r.lower && py[i] > settings.tol_dual) || (b == r.upper && py[i] < -settings.tol_dual));
                if wrong {
                    changed = true;
                } else {
                    next.push((i, b));
                }
            }
            for (i, r) in problem.rows.iter().enumerate() {
                if active.iter().any(|&(j, _)| j == i) {
                    continue;
                }
                let v = r.eval(&px);
                if v < r.lower - settings.tol_prim {
                    next.push((i, r.lower));
                    changed = true;
                } else if v > r.upper + settings.tol_prim {
                    next.push((i, r.upper));
                    changed = true;
                }
            }
            if !changed {
                let (prim, dual) = certify(problem, &px, &py);
                return (prim <= settings.tol_prim && dual <= settings.tol_dual).then_some((px, py, prim, dual));
            }
            next.sort_by_key(|&(i, _)| i);
            active = next;
        }
        None
    };

    // the warm start's active set, or the equality rows alone, is often
    // already correct
    if settings.polish {
        let guess = match warm {
            Some(w) if w.z.len() == m && w.y.len() == m => (w.z.clone(), w.y.clone()),
            _ => (problem.rows.iter().map(|r| 0.0_f64.max(r.lower).min(r.upper)).collect(), vec![0.0; m]),
        };
        if let Some((x, y, prim, dual)) = try_polish(&guess.0, &guess.1) {
            return finish(x, y, QpStatus::Optimal, prim, dual, 0, true);
        }
    }

    let s = scale_problem(problem, settings.scaling_iters);

    // scaled iterates
    let mut x = vec![0.0; n];
    let mut z = vec![0.0; m];
    let mut y = vec![0.0; m];
    if let Some(w) = warm {
        if w.x.len() == n && w.z.len() == m && w.y.len() == m {
            for i in 0..n {
                x[i] = w.x[i] / s.d[i];
            }
            for i in 0..m {
                z[i] = w.z[i] * s.e[i];
                y[i] = w.y[i] * s.c / s.e[i];
            }
        }
    }

    let mut rho = settings.rho;
    let mut rho_vec = row_rho(&s.rows, rho);
    let mut factor = match kkt_factor(&s, settings.sigma, &rho_vec) {
        Some(f) => f,
        None => {
            return finish(vec![0.0; n], vec![0.0; m], QpStatus::MaxIter, f64::INFINITY, f64::INFINITY, 0, false)
        }
    };

    let mut rhs = vec![0.0; n];
    let mut tmp_n = vec![0.0; n];
    let mut ax = vec![0.0; m];
    let mut z_tilde = vec![0.0; m];
    let mut y_prev = vec![0.0; m];
    let mut last_active: Option<Vec<i8>> = None;

    let unscale = |x: &[f64], z: &[f64], y: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            x.iter().zip(&s.d).map(|(a, d)| a * d).collect(),
            z.iter().zip(&s.e).map(|(a, e)| a / e).collect(),
            y.iter().zip(&s.e).map(|(a, e)| a * e / s.c).collect(),
        )
    };

    let mut iter = 0;
    while iter < settings.max_iter {
        iter += 1;
        y_prev.copy_from_slice(&y);

        // x̃ = K⁻¹ (σx − q + Aᵀ(ρz − y))
        let w: Vec<f64> = (0..m).map(|i| rho_vec[i] * z[i] - y[i]).collect();
        mat_at(&s.rows, &w, &mut tmp_n);
        for i in 0..n {
            rhs[i] = settings.sigma * x[i] - s.q[i] + tmp_n[i];
        }
        factor.solve(&mut rhs);
        mat_a(&s.rows, &rhs, &mut z_tilde);
        let a = settings.alpha;
        for i in 0..n {
            x[i] = a * rhs[i] + (1.0 - a) * x[i];
        }
        for i in 0..m {
            let zh = a * z_tilde[i] + (1.0 - a) * z[i];
            let r = &s.rows[i];
            let zn = (zh + y[i] / rho_vec[i]).clamp(r.lower, r.upper);
            y[i] += rho_vec[i] * (zh - zn);
            z[i] = zn;
        }

        let check = iter % settings.check_interval == 0 || iter == settings.max_iter;
        if !check {
            continue;
        }

        // residuals, unscaled
        mat_a(&s.rows, &x, &mut ax);
        let prim = (0..m).fold(0.0_f64, |acc, i| acc.max(((ax[i] - z[i]) / s.e[i]).abs()));
        let mut px = vec![0.0; n];
        s.p.matvec(&x, &mut px);
        let mut aty = vec![0.0; n];
        mat_at(&s.rows, &y, &mut aty);
        let dual = (0..n).fold(0.0_f64, |acc, i| acc.max(((px[i] + s.q[i] + aty[i]) / s.d[i] / s.c).abs()));

        if prim <= settings.tol_prim && dual <= settings.tol_dual {
            let (ux, uz, uy) = unscale(&x, &z, &y);
            if settings.polish {
                if let Some((px, py, pp, pd)) = try_polish(&uz, &uy) {
                    return finish(px, py, QpStatus::Optimal, pp, pd, iter, true);
                }
            }
            let (cp, cd) = certify(problem, &ux, &uy);
            return finish(ux, uy, QpStatus::Optimal, cp.max(prim), cd.max(dual), iter, false);
        }

        // early polish once the active set stops changing
        if settings.polish {
            let (_, uz, uy) = unscale(&x, &z, &y);
            let act: Vec<i8> = problem
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    if uz[i] - r.lower < -uy[i] {
                        -1
                    } else if r.upper - uz[i] < uy[i] {
                        1
                    } else {
                        0
                    }
                })
                .collect();
            if last_active.as_ref() == Some(&act) {
                if let Some((px, py, pp, pd)) = try_polish(&uz, &uy) {
                    return finish(px, py, QpStatus::Optimal, pp, pd, iter, true);
                }
            }
            last_active = Some(act);
        }

        // primal infeasibility certificate
        let dy: Vec<f64> = (0..m).map(|i| (y[i] - y_prev[i]) * s.e[i] / s.c).collect();
        let dy_norm = inf_norm(&dy);
        if dy_norm > 1e-12 {
            let mut atdy = vec![0.0; n];
            mat_at(&problem.rows, &dy, &mut atdy);
            let mut support = 0.0;
            let mut unbounded = false;
            for (r, &v) in problem.rows.iter().zip(&dy) {
                if v > 0.0 {
                    if r.upper.is_infinite() {
                        unbounded = true;
                        break;
                    }
                    support += r.upper * v;
                } else if v < 0.0 {
                    if r.lower.is_infinite() {
                        unbounded = true;
                        break;
                    }
                    support += r.lower * v;
                }
            }
            if !unbounded && inf_norm(&atdy) <= INFEAS_TOL * dy_norm && support < -INFEAS_TOL * dy_norm {
                let (ux, _, uy) = unscale(&x, &z, &y);
                return finish(ux, uy, QpStatus::Infeasible, prim, dual, iter, false);
            }
        }

        // step-size adaptation
        let ax_n = inf_norm(&ax).max(inf_norm(&z));
        let dual_scale = inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&s.q));
        let prim_s = (0..m).fold(0.0_f64, |acc, i| acc.max((ax[i] - z[i]).abs()));
        let dual_s = (0..n).fold(0.0_f64, |acc, i| acc.max((px[i] + s.q[i] + aty[i]).abs()));
        if ax_n > 1e-12 && dual_scale > 1e-12 && dual_s > 1e-15 && m > 0 {
            let ratio = ((prim_s / ax_n) / (dual_s / dual_scale)).sqrt();
            let new_rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
            if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                let candidate = row_rho(&s.rows, new_rho);
                if let Some(f) = kkt_factor(&s, settings.sigma, &candidate) {
                    rho = new_rho;
                    rho_vec = candidate;
                    factor = f;
                }
            }
        }
    }

    let (ux, _, uy) = unscale(&x, &z, &y);
    let (cp, cd) = certify(problem, &ux, &uy);
    finish(ux, uy, QpStatus::MaxIter, cp, cd, iter, false)
}
