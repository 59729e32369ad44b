//! Dual active-set solver for strictly convex quadratic programs
//! (Goldfarb and Idnani):
//!
//!   minimize ½ xᵀ G x + aᵀ x   subject to   cⱼᵀ x ≥ bⱼ
//!
//! G must be symmetric positive definite.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multiplier of each constraint (zero when inactive).
    pub multipliers: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpError {
    NotPositiveDefinite,
    Infeasible,
}

const EPS: f64 = 1e-12;

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let h = a.hypot(b);
    if h == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        (a / h, b / h, h)
    }
}

/// Applies the rotation to columns `i` and `k` of `j`.
fn rotate_columns(j: &mut DMatrix<f64>, i: usize, k: usize, c: f64, s: f64) {
    for r in 0..j.nrows() {
        let (x, y) = (j[(r, i)], j[(r, k)]);
        j[(r, i)] = c * x + s * y;
        j[(r, k)] = -s * x + c * y;
    }
}

/// `cons` holds one constraint normal per column.
pub fn solve(
    g: &DMatrix<f64>,
    a: &DVector<f64>,
    cons: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<QpSolution, QpError> {
    let n = g.nrows();
    let m = cons.ncols();
    let chol = g.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?;
    let l = chol.l();
    // J = L⁻ᵀ
    let mut jm = l
        .transpose()
        .try_inverse()
        .ok_or(QpError::NotPositiveDefinite)?;
    let mut r = DMatrix::<f64>::zeros(n, n);
    let mut x = -chol.solve(a);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let scale: Vec<f64> = (0..m).map(|j| cons.column(j).norm().max(1.0)).collect();
    let mut iterations = 0;

    loop {
        iterations += 1;
        if iterations > 50 * (m + n) + 100 {
            return Err(QpError::Infeasible);
        }
        // most violated constraint (scaled)
        let mut p = None;
        let mut worst = -1e-10;
        for j in 0..m {
            if active.contains(&j) {
                continue;
            }
            let s = (cons.column(j).dot(&x) - b[j]) / scale[j];
            if s < worst {
                worst = s;
                p = Some(j);
            }
        }
        let Some(p) = p else {
            let mut multipliers = vec![0.0; m];
            for (k, &j) in active.iter().enumerate() {
                multipliers[j] = u[k];
            }
            return Ok(QpSolution { x, multipliers });
        };
        let np = cons.column(p).clone_owned();
        let mut u_plus = u.clone();
        u_plus.push(0.0);
        loop {
            let q = active.len();
            let d = jm.transpose() * &np;
            let mut z = DVector::<f64>::zeros(n);
            for k in q..n {
                z += jm.column(k) * d[k];
            }
            // r = R⁻¹ d₁
            let mut rv = vec![0.0; q];
            for i in (0..q).rev() {
                let mut s = d[i];
                for k in i + 1..q {
                    s -= r[(i, k)] * rv[k];
                }
                rv[i] = s / r[(i, i)];
            }
            // partial (dual) step
            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            for k in 0..q {
                if rv[k] > EPS {
                    let ratio = u_plus[k] / rv[k];
                    if ratio < t1 {
                        t1 = ratio;
                        drop_at = Some(k);
                    }
                }
            }
            // full (primal) step
            let zn = z.dot(&np);
            let t2 = if z.norm() > EPS && zn.abs() > EPS {
                -(np.dot(&x) - b[p]) / zn
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpError::Infeasible);
            }
            if t2.is_finite() {
                x += &z * t;
            }
            for k in 0..q {
                u_plus[k] -= t * rv[k];
            }
            u_plus[q] += t;
            if t2 <= t1 {
                // add p: rotate d so that only its first q+1 entries are nonzero
                let mut d = d;
                for k in (q + 1..n).rev() {
                    let (c, s, h) = givens(d[k - 1], d[k]);
                    d[k - 1] = h;
                    d[k] = 0.0;
                    rotate_columns(&mut jm, k - 1, k, c, s);
                }
                for i in 0..=q {
                    r[(i, q)] = d[i];
                }
                active.push(p);
                u = u_plus;
                break;
            }
            // drop the blocking constraint and retry the same p
            let k = drop_at.expect("partial step has a blocking constraint");
            active.remove(k);
            u_plus.remove(k);
            for col in k..q - 1 {
                for row in 0..n {
                    r[(row, col)] = r[(row, col + 1)];
                }
            }
            for row in 0..n {
                r[(row, q - 1)] = 0.0;
            }
            for i in k..q - 1 {
                let (c, s, h) = givens(r[(i, i)], r[(i + 1, i)]);
                r[(i, i)] = h;
                r[(i + 1, i)] = 0.0;
                for col in i + 1..q - 1 {
                    let (x1, y1) = (r[(i, col)], r[(i + 1, col)]);
                    r[(i, col)] = c * x1 + s * y1;
                    r[(i + 1, col)] = -s * x1 + c * y1;
                }
                rotate_columns(&mut jm, i, i + 1, c, s);
            }
        }
    }
}
