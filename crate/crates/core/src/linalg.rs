//! Small dense/sparse helpers: tridiagonal LU, restarted GMRES, preconditioned
//! conjugate gradients and a straight-line least-squares fit.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// LU factors of a tridiagonal matrix, computed without pivoting.
///
/// Suitable for the diagonally dominant or symmetric positive definite
/// systems produced by second-difference operators.
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    mult: Vec<f64>,
    pivot: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagonalLu {
    /// `lower[i]` is the entry `(i, i-1)` (ignored for `i = 0`), `upper[i]`
    /// the entry `(i, i+1)` (ignored for the last row).
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        assert!(lower.len() == n && upper.len() == n);
        let mut mult = vec![0.0; n];
        let mut pivot = vec![0.0; n];
        if n == 0 {
            return Ok(Self { mult, pivot, upper: Vec::new() });
        }
        pivot[0] = diag[0];
        for i in 1..n {
            if pivot[i - 1] == 0.0 || !pivot[i - 1].is_finite() {
                return Err(Error::LinearSolver(format!("zero pivot in tridiagonal row {}", i - 1)));
            }
            mult[i] = lower[i] / pivot[i - 1];
            pivot[i] = diag[i] - mult[i] * upper[i - 1];
        }
        if pivot[n - 1] == 0.0 || !pivot[n - 1].is_finite() {
            return Err(Error::LinearSolver(format!("zero pivot in tridiagonal row {}", n - 1)));
        }
        Ok(Self { mult, pivot, upper: upper.to_vec() })
    }

    pub fn len(&self) -> usize {
        self.pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivot.is_empty()
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.pivot.len();
        for i in 1..n {
            rhs[i] -= self.mult[i] * rhs[i - 1];
        }
        rhs[n - 1] /= self.pivot[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.upper[i] * rhs[i + 1]) / self.pivot[i];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrylovStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Restarted GMRES with right preconditioning.
///
/// `apply(x, y)` writes `A x` into `y`; `precond(r, z)` writes an
/// approximation of `A^{-1} r` into `z`. On entry `x` holds the initial
/// guess. Converges when `‖b − A x‖ ≤ tol · ‖b‖`.
pub fn gmres<A, P>(
    apply: A,
    precond: P,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<KrylovStats>
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovStats { iterations: 0, relative_residual: 0.0 });
    }
    let m = restart.max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut hess = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut total = 0;

    loop {
        apply(x, &mut w);
        for i in 0..n {
            r[i] = b[i] - w[i];
        }
        let beta = norm2(&r);
        let rel = beta / b_norm;
        if rel <= tol {
            return Ok(KrylovStats { iterations: total, relative_residual: rel });
        }
        if total >= max_iter {
            return Err(Error::LinearSolver(format!(
                "GMRES stalled after {total} iterations at relative residual {rel:e}"
            )));
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            precond(&basis[k], &mut z);
            apply(&z, &mut w);
            for (j, vj) in basis.iter().enumerate() {
                let h = dot(&w, vj);
                hess[j][k] = h;
                for i in 0..n {
                    w[i] -= h * vj[i];
                }
            }
            // second Gram-Schmidt pass keeps the basis orthogonal at long restarts
            for (j, vj) in basis.iter().enumerate() {
                let h = dot(&w, vj);
                hess[j][k] += h;
                for i in 0..n {
                    w[i] -= h * vj[i];
                }
            }
            let h_next = norm2(&w);
            hess[k + 1][k] = h_next;
            for j in 0..k {
                let t = cs[j] * hess[j][k] + sn[j] * hess[j + 1][k];
                hess[j + 1][k] = -sn[j] * hess[j][k] + cs[j] * hess[j + 1][k];
                hess[j][k] = t;
            }
            let denom = hess[k][k].hypot(hess[k + 1][k]);
            if denom == 0.0 {
                return Err(Error::LinearSolver("GMRES breakdown".into()));
            }
            cs[k] = hess[k][k] / denom;
            sn[k] = hess[k + 1][k] / denom;
            hess[k][k] = denom;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            if g[k + 1].abs() / b_norm <= tol * 0.5 || h_next == 0.0 || total >= max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / h_next).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= hess[i][j] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        let mut combo = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            for i in 0..n {
                combo[i] += yj * basis[j][i];
            }
        }
        precond(&combo, &mut z);
        for i in 0..n {
            x[i] += z[i];
        }
    }
}

/// Preconditioned conjugate gradients for symmetric positive definite systems.
pub fn pcg<A, P>(apply: A, precond: P, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<KrylovStats>
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..=max_iter {
        let rel = norm2(&r) / b_norm;
        if rel <= tol {
            return Ok(KrylovStats { iterations: it, relative_residual: rel });
        }
        if it == max_iter {
            return Err(Error::LinearSolver(format!(
                "CG did not converge in {max_iter} iterations (relative residual {rel:e})"
            )));
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::LinearSolver("CG met a non-positive curvature direction".into()));
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    unreachable!()
}

/// Ordinary least-squares line `y ≈ slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square of the fit residuals.
    pub rms_residual: f64,
    /// Standard error of the slope (zero for two points or an exact fit).
    pub slope_std_error: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::Fit(format!("need at least two paired samples, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let slope_std_error = if n > 2 { (ssr / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LineFit { slope, intercept, rms_residual: (ssr / nf).sqrt(), slope_std_error })
}
