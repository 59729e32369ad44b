//! Sequential quadratic programming for smooth problems with one inequality
//! constraint and box bounds, in the style of SLSQP: damped BFGS Hessian of
//! the Lagrangian, a dual active-set QP per iteration and an L1 merit line
//! search.

use super::qp::{self, QpError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Value and gradient at a point.
pub type Eval = (f64, Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqpOptions {
    pub max_iterations: usize,
    /// Stationarity and step tolerance.
    pub tolerance: f64,
    /// Absolute constraint tolerance: `c(x) ≥ -feasibility_tolerance`.
    pub feasibility_tolerance: f64,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-6,
            feasibility_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqpResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub constraint: f64,
    pub iterations: usize,
    pub converged: bool,
    pub feasible: bool,
}

struct Problem<'a, F, C> {
    objective: &'a F,
    constraint: &'a C,
    lower: &'a [f64],
    upper: &'a [f64],
}

impl<F, C> Problem<'_, F, C>
where
    F: Fn(&[f64]) -> Eval,
    C: Fn(&[f64]) -> Eval,
{
    fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Penalized objective to minimize: −f + μ·max(0, −c).
    fn merit(&self, x: &[f64], mu: f64) -> f64 {
        -(self.objective)(x).0 + mu * (-(self.constraint)(x).0).max(0.0)
    }
}

/// Maximizes `objective` subject to `constraint(x) ≥ 0` and
/// `lower ≤ x ≤ upper`, starting from `start` (clamped into the box).
/// Returns the final iterate, or the best feasible iterate seen when the
/// iteration cap is reached without convergence.
pub fn constrained_maximize<F, C>(
    objective: F,
    constraint: C,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &SqpOptions,
) -> SqpResult
where
    F: Fn(&[f64]) -> Eval,
    C: Fn(&[f64]) -> Eval,
{
    let n = start.len();
    let p = Problem {
        objective: &objective,
        constraint: &constraint,
        lower,
        upper,
    };
    let mut x = start.to_vec();
    p.clamp(&mut x);
    let mut hess = DMatrix::<f64>::identity(n, n);
    let mut mu: f64 = 1.0;
    let mut lambda: f64;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut converged = false;
    let mut iterations = 0;

    let (mut f, mut gf) = objective(&x);
    let (mut c, mut gc) = constraint(&x);
    while iterations < opts.max_iterations {
        iterations += 1;
        if c >= -opts.feasibility_tolerance && best.as_ref().is_none_or(|b| f > b.0) {
            best = Some((f, x.clone()));
        }
        // QP in d: min ½dᵀHd − ∇fᵀd  s.t. c + ∇cᵀd ≥ 0, lower − x ≤ d ≤ upper − x
        let mut cols = Vec::with_capacity(1 + 2 * n);
        let mut rhs = Vec::with_capacity(1 + 2 * n);
        cols.push(gc.clone());
        rhs.push(-c);
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            cols.push(e.clone());
            rhs.push(lower[i] - x[i]);
            e[i] = -1.0;
            cols.push(e);
            rhs.push(x[i] - upper[i]);
        }
        let cons = DMatrix::from_fn(n, cols.len(), |r, k| cols[k][r]);
        let a = -DVector::from_column_slice(&gf);
        let sol = match qp::solve(&hess, &a, &cons, &DVector::from_vec(rhs)) {
            Ok(s) => s,
            Err(QpError::NotPositiveDefinite) => {
                hess = DMatrix::identity(n, n);
                continue;
            }
            Err(QpError::Infeasible) => {
                // Linearization cannot be satisfied inside the box: pull the
                // iterate back toward the lower bound until feasible.
                let restored = restore(&p, &x);
                if restored == x {
                    break;
                }
                x = restored;
                (f, gf) = objective(&x);
                (c, gc) = constraint(&x);
                hess = DMatrix::identity(n, n);
                continue;
            }
        };
        let d: Vec<f64> = sol.x.iter().copied().collect();
        lambda = sol.multipliers[0];
        let step_norm = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if step_norm <= opts.tolerance && c >= -opts.feasibility_tolerance {
            converged = true;
            break;
        }
        mu = mu.max(1.5 * lambda.abs()).max(1e-3);
        let phi0 = p.merit(&x, mu);
        let dir_deriv = -dot(&gf, &d) - mu * (-c).max(0.0);
        let mut alpha = 1.0;
        let mut x_new = x.clone();
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                x_new[i] = x[i] + alpha * d[i];
            }
            p.clamp(&mut x_new);
            if p.merit(&x_new, mu) <= phi0 + 1e-4 * alpha * dir_deriv.min(0.0) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            converged = step_norm <= opts.tolerance.sqrt() && c >= -opts.feasibility_tolerance;
            break;
        }
        let (f_new, gf_new) = objective(&x_new);
        let (c_new, gc_new) = constraint(&x_new);
        // BFGS on the Lagrangian −f − λc with Powell damping
        let s = DVector::from_iterator(n, x_new.iter().zip(&x).map(|(a, b)| a - b));
        let grad_l = |gf: &[f64], gc: &[f64]| {
            DVector::from_iterator(n, gf.iter().zip(gc).map(|(a, b)| -a - lambda * b))
        };
        let mut y = grad_l(&gf_new, &gc_new) - grad_l(&gf, &gc);
        let hs = &hess * &s;
        let shs = s.dot(&hs);
        if shs > 1e-16 {
            let sy = s.dot(&y);
            if sy < 0.2 * shs {
                let theta = 0.8 * shs / (shs - sy);
                y = &y * theta + &hs * (1.0 - theta);
            }
            let sy = s.dot(&y);
            if sy > 1e-16 {
                hess += &y * y.transpose() / sy - &hs * hs.transpose() / shs;
            }
        }
        let moved = s.amax();
        x = x_new;
        f = f_new;
        gf = gf_new;
        c = c_new;
        gc = gc_new;
        if moved <= opts.tolerance * 1e-3 && c >= -opts.feasibility_tolerance {
            converged = true;
            break;
        }
    }
    let feasible_now = c >= -opts.feasibility_tolerance;
    if feasible_now && best.as_ref().is_none_or(|b| f >= b.0) {
        best = Some((f, x.clone()));
    }
    let (x, f, c) = match (converged && feasible_now, best) {
        (true, _) | (false, None) => (x, f, c),
        (false, Some((bf, bx))) => {
            let bc = constraint(&bx).0;
            (bx, bf, bc)
        }
    };
    SqpResult {
        objective: f,
        constraint: c,
        iterations,
        converged,
        feasible: c >= -opts.feasibility_tolerance,
        x,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Bisects on the segment from the lower bound to `x` for the farthest
/// feasible point.
fn restore<F, C>(p: &Problem<'_, F, C>, x: &[f64]) -> Vec<f64>
where
    F: Fn(&[f64]) -> Eval,
    C: Fn(&[f64]) -> Eval,
{
    let at = |s: f64| -> Vec<f64> {
        x.iter()
            .zip(p.lower)
            .map(|(&v, &lo)| lo + s * (v - lo))
            .collect()
    };
    if (p.constraint)(&at(0.0)).0 < 0.0 {
        return x.to_vec();
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (p.constraint)(&at(mid)).0 >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}
