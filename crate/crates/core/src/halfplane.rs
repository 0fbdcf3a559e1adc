//! Contact-line model problem on a truncated half-plane.
//!
//! Solves `−div(A_α∇v) + f′(v) = 0` on `[−L_R, L_R] × [0, L_H]` with
//! `A_α = [[1, −cos α], [−cos α, 1]]`, the nonlinear Robin condition
//! `∂_H v = cos α ∂_R v + σ_α′(v)` at `H = 0` and the one-dimensional
//! profile as Dirichlet data on the other three sides. Also solves the
//! linearization around a converged field and evaluates the flux and
//! coefficient integrals built from it.
//!
//! Discretization: second-order differences on a uniform grid, the
//! centered four-point mixed stencil in the interior and a ghost row at
//! `H = 0`. On the boundary row the mixed derivative is taken from the
//! tangential derivative of the boundary condition,
//! `∂_R∂_H v = cos α ∂_RR v + σ_α″(v) ∂_R v`, which keeps the stencil
//! inside the grid.

use crate::error::{Error, Result};
use crate::linalg::{gmres, norm2, norm_inf, TridiagonalLu};
use crate::potential::{BoundaryEnergy, Potential};
use crate::profile::{solve_optimal_profile, Profile, DEFAULT_HALF_LENGTH, DEFAULT_INTERVALS};
use crate::quadrature::trapezoid;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
/// Largest `|α − π/2|` accepted by the nonlinear solver.
pub const MAX_ANGLE_OFFSET: f64 = 0.35;
const MAX_NEWTON: usize = 50;
const MAX_HALVINGS: usize = 6;
const GROWTH_LIMIT: usize = 5;
const GMRES_TOL: f64 = 1e-12;
const GMRES_RESTART: usize = 60;
const GMRES_MAX: usize = 2000;
const SLACK: f64 = 1e-6;

/// Truncation box and node counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlaneGrid {
    pub half_width: f64,
    pub height: f64,
    pub nodes_r: usize,
    pub nodes_h: usize,
}

impl Default for HalfPlaneGrid {
    fn default() -> Self {
        Self { half_width: 10.0, height: 10.0, nodes_r: 401, nodes_h: 201 }
    }
}

impl HalfPlaneGrid {
    pub fn new(half_width: f64, height: f64, nodes_r: usize, nodes_h: usize) -> Result<Self> {
        let g = Self { half_width, height, nodes_r, nodes_h };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite() && self.height > 0.0 && self.height.is_finite()) {
            return Err(Error::Domain(format!("box [{}, {}] must be positive", self.half_width, self.height)));
        }
        if self.nodes_r < 5 || self.nodes_h < 4 {
            return Err(Error::Domain(format!("grid {}x{} too small", self.nodes_r, self.nodes_h)));
        }
        if self.nodes_r % 2 == 0 {
            return Err(Error::Domain(format!("nodes_r = {} must be odd so that R = 0 is a node", self.nodes_r)));
        }
        Ok(())
    }

    /// Same box with every spacing halved.
    pub fn refined(&self) -> Self {
        Self { nodes_r: 2 * self.nodes_r - 1, nodes_h: 2 * self.nodes_h - 1, ..*self }
    }

    pub fn h_r(&self) -> f64 {
        2.0 * self.half_width / (self.nodes_r - 1) as f64
    }

    pub fn h_h(&self) -> f64 {
        self.height / (self.nodes_h - 1) as f64
    }

    pub fn r(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.h_r()
    }

    pub fn h(&self, j: usize) -> f64 {
        j as f64 * self.h_h()
    }

    pub fn len(&self) -> usize {
        self.nodes_r * self.nodes_h
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of node `(R_i, H_j)` in row-major storage.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nodes_r + i
    }

    fn unknowns(&self) -> usize {
        (self.nodes_r - 2) * (self.nodes_h - 1)
    }
}

/// `A_α`.
pub fn anisotropy(alpha: f64) -> [[f64; 2]; 2] {
    let c = crate::potential::cos_snapped(alpha);
    [[1.0, -c], [-c, 1.0]]
}

/// Exponents of the diagnostic weight `e^{β|R| + γH}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayWeights {
    pub beta: f64,
    pub gamma: f64,
}

impl Default for DecayWeights {
    fn default() -> Self {
        Self { beta: 0.8, gamma: 0.8 }
    }
}

impl DecayWeights {
    fn validate(&self, p: &Potential) -> Result<()> {
        let cap = p.d2f(1.0).min(p.d2f(-1.0)).max(0.0).sqrt();
        if !(self.beta >= 0.0 && self.gamma >= 0.0) || self.beta + self.gamma > cap + 1e-12 {
            return Err(Error::Domain(format!(
                "decay weights (β, γ) = ({}, {}) need β + γ ≤ {cap}",
                self.beta, self.gamma
            )));
        }
        Ok(())
    }

    fn weight(&self, r: f64, h: f64) -> f64 {
        (self.beta * r.abs() + self.gamma * h).exp()
    }
}

/// Solver settings for [`solve_nonlinear_halfplane`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlaneSpec {
    pub grid: HalfPlaneGrid,
    pub newton_tol: f64,
    pub weights: DecayWeights,
}

impl Default for HalfPlaneSpec {
    fn default() -> Self {
        Self { grid: HalfPlaneGrid::default(), newton_tol: DEFAULT_NEWTON_TOL, weights: DecayWeights::default() }
    }
}

/// Converged solution of the nonlinear half-plane problem.
#[derive(Debug, Clone)]
pub struct HalfPlaneField {
    pub grid: HalfPlaneGrid,
    pub alpha: f64,
    pub cos_alpha: f64,
    potential: Potential,
    sigma: BoundaryEnergy,
    /// Row-major samples, see [`HalfPlaneGrid::index`].
    pub values: Vec<f64>,
    /// Discrete one-dimensional profile on the `R` grid, used as initial
    /// guess and as truncation data.
    pub theta: Vec<f64>,
    /// `θ₀′(R_i)` of the continuous profile.
    pub theta_d1: Vec<f64>,
    /// `∫(θ₀′)²`.
    pub theta_norm_sq: f64,
    pub newton_steps: usize,
    /// Max-norm of the discrete system residual.
    pub residual: f64,
    /// Max-norm of the boundary condition evaluated with a one-sided
    /// second-order `∂_H`.
    pub boundary_residual: f64,
    pub weights: DecayWeights,
    /// Max over nodes of `e^{β|R|+γH}` times the system residual.
    pub weighted_residual: f64,
    /// Max over the boundary row of `e^{β|R|}` times the one-sided defect.
    pub weighted_boundary_residual: f64,
}

impl HalfPlaneField {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn sigma(&self) -> &BoundaryEnergy {
        &self.sigma
    }

    /// `max_i |v(R_i, H_j) − θ(R_i)|` for every row `j`.
    pub fn slice_deviation(&self) -> Vec<f64> {
        (0..self.grid.nodes_h)
            .map(|j| (0..self.grid.nodes_r).map(|i| (self.value(i, j) - self.theta[i]).abs()).fold(0.0, f64::max))
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.values)
    }
}

/// Stencil coefficients shared by the residual and its linearization.
struct Stencil {
    nr: usize,
    nh: usize,
    hr: f64,
    hh: f64,
    c: f64,
}

impl Stencil {
    fn new(grid: &HalfPlaneGrid, c: f64) -> Self {
        Self { nr: grid.nodes_r, nh: grid.nodes_h, hr: grid.h_r(), hh: grid.h_h(), c }
    }

    /// Rows `0..nh−1`, columns `1..nr−1` of `out` (unknown layout) from the
    /// full field `u`. `react(k, u)` is the zeroth-order term at unknown `k`,
    /// `bc(i, u0, dr)` returns the boundary flux `σ` and the tangential
    /// derivative of `σ` on the boundary row.
    fn apply<R, B>(&self, u: &[f64], out: &mut [f64], react: R, bc: B)
    where
        R: Fn(usize, f64) -> f64 + Sync,
        B: Fn(usize, f64, f64) -> (f64, f64) + Sync,
    {
        let (nr, hr, hh, c) = (self.nr, self.hr, self.hh, self.c);
        let m = nr - 2;
        let (hr2, hh2) = (hr * hr, hh * hh);
        out.par_chunks_mut(m).enumerate().for_each(|(j, row)| {
            let at = |i: usize, jj: usize| u[jj * nr + i];
            for (k, o) in row.iter_mut().enumerate() {
                let i = k + 1;
                let x = at(i, j);
                let drr = (at(i + 1, j) - 2.0 * x + at(i - 1, j)) / hr2;
                let (dhh, mixed) = if j > 0 {
                    let dhh = (at(i, j + 1) - 2.0 * x + at(i, j - 1)) / hh2;
                    let mixed = (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1) + at(i - 1, j - 1))
                        / (4.0 * hr * hh);
                    (dhh, mixed)
                } else {
                    let dr = (at(i + 1, 0) - at(i - 1, 0)) / (2.0 * hr);
                    let (flux, tangential) = bc(i, x, dr);
                    let dhh = (2.0 * at(i, 1) - 2.0 * x - 2.0 * hh * (c * dr + flux)) / hh2;
                    (dhh, c * drr + tangential)
                };
                *o = -drr - dhh + 2.0 * c * mixed + react(j * m + k, x);
            }
        });
    }
}

/// Separable approximation `(−D_RR + f″(θ)) ⊗ I − I ⊗ D_HH` of the
/// linearized operator, inverted by an eigenbasis in `R` and a tridiagonal
/// solve per mode in `H`. Exact for the right angle.
struct Preconditioner {
    basis: DMatrix<f64>,
    modes: Vec<TridiagonalLu>,
    spread: f64,
}

impl Preconditioner {
    fn new(st: &Stencil, p: &Potential, theta: &[f64]) -> Result<Self> {
        let m = st.nr - 2;
        let nh = st.nh - 1;
        let hr2 = st.hr * st.hr;
        let hh2 = st.hh * st.hh;
        let mut t = DMatrix::zeros(m, m);
        for k in 0..m {
            t[(k, k)] = 2.0 / hr2 + p.d2f(theta[k + 1]);
            if k + 1 < m {
                t[(k, k + 1)] = -1.0 / hr2;
                t[(k + 1, k)] = -1.0 / hr2;
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut modes = Vec::with_capacity(m);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for &mu in eig.eigenvalues.iter() {
            let lower = vec![-1.0 / hh2; nh];
            let mut upper = vec![-1.0 / hh2; nh];
            upper[0] = -2.0 / hh2;
            let diag = vec![mu + 2.0 / hh2; nh];
            modes.push(TridiagonalLu::new(&lower, &diag, &upper)?);
            lo = lo.min(mu.abs());
            hi = hi.max(mu.abs() + 4.0 / hh2);
        }
        // smallest H eigenvalue with a reflecting bottom and a fixed top
        let h_min = (4.0 / hh2) * (std::f64::consts::PI / (4.0 * nh as f64)).sin().powi(2);
        Ok(Self { basis: eig.eigenvectors, modes, spread: hi / (lo + h_min) })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let m = self.basis.nrows();
        let nh = self.modes[0].len();
        let rm = DMatrix::from_column_slice(m, nh, r);
        let mut y = self.basis.tr_mul(&rm);
        let mut col = vec![0.0; nh];
        for k in 0..m {
            for j in 0..nh {
                col[j] = y[(k, j)];
            }
            self.modes[k].solve_in_place(&mut col);
            for j in 0..nh {
                y[(k, j)] = col[j];
            }
        }
        let out = &self.basis * y;
        z.copy_from_slice(out.as_slice());
    }
}

/// Discrete profile `−D²θ + f′(θ) = 0` on the `R` grid with the continuous
/// profile as Dirichlet data at `±L_R`. The equation at `R = 0` is
/// replaced by `θ(0) = θ₀(0)`: with only the far ends fixed the translation
/// mode leaves the system singular to working precision.
fn discrete_profile(p: &Potential, prof: &Profile, grid: &HalfPlaneGrid) -> Result<Vec<f64>> {
    let n = grid.nodes_r;
    let h2 = grid.h_r() * grid.h_r();
    let mut th: Vec<f64> = (0..n).map(|i| prof.eval(grid.r(i))).collect();
    for step in 0..30 {
        let m = n - 2;
        let mut lower = vec![-1.0 / h2; m];
        let mut upper = vec![-1.0 / h2; m];
        let mut diag = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for k in 0..m {
            let i = k + 1;
            diag[k] = 2.0 / h2 + p.d2f(th[i]);
            rhs[k] = (th[i + 1] - 2.0 * th[i] + th[i - 1]) / h2 - p.df(th[i]);
        }
        let mid = n / 2 - 1;
        lower[mid] = 0.0;
        upper[mid] = 0.0;
        diag[mid] = 1.0;
        rhs[mid] = 0.0;
        lower[0] = 0.0;
        upper[m - 1] = 0.0;
        TridiagonalLu::new(&lower, &diag, &upper)?.solve_in_place(&mut rhs);
        for k in 0..m {
            th[k + 1] += rhs[k];
        }
        if norm_inf(&rhs) <= 1e-14 {
            return Ok(th);
        }
        if step == 29 {
            return Err(Error::NonConvergence { steps: 30, residual: norm_inf(&rhs) });
        }
    }
    unreachable!()
}

fn check_angle(alpha: f64, grid: &HalfPlaneGrid) -> Result<f64> {
    if !(alpha > 0.0 && alpha < std::f64::consts::PI) {
        return Err(Error::Domain(format!("α = {alpha} outside (0, π)")));
    }
    if (alpha - FRAC_PI_2).abs() > MAX_ANGLE_OFFSET {
        return Err(Error::Precondition(format!(
            "|α − π/2| = {} exceeds {MAX_ANGLE_OFFSET}",
            (alpha - FRAC_PI_2).abs()
        )));
    }
    let c = crate::potential::cos_snapped(alpha);
    let a = anisotropy(alpha);
    assert!(a[0][0] > 0.0 && a[0][0] * a[1][1] - a[0][1] * a[1][0] > 0.0, "A_α not positive definite");
    let ratio = grid.h_r() / grid.h_h();
    if c.abs() * ratio.max(1.0 / ratio) > 1.0 {
        return Err(Error::Precondition(format!(
            "mixed term |cos α| = {} not dominated on spacings {} x {}",
            c.abs(),
            grid.h_r(),
            grid.h_h()
        )));
    }
    Ok(c)
}

fn residual_full(st: &Stencil, p: &Potential, s: &BoundaryEnergy, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; (st.nr - 2) * (st.nh - 1)];
    st.apply(v, &mut out, |_, x| p.df(x), |_, x, dr| (s.d1(x), s.d2(x) * dr));
    out
}

/// Linearization data at a field.
struct Linearization {
    fpp: Vec<f64>,
    s2: Vec<f64>,
    s3dr: Vec<f64>,
}

impl Linearization {
    fn at(st: &Stencil, p: &Potential, s: &BoundaryEnergy, v: &[f64]) -> Self {
        let nr = st.nr;
        let m = nr - 2;
        let fpp: Vec<f64> = (0..st.nh - 1)
            .flat_map(|j| (1..nr - 1).map(move |i| (i, j)))
            .map(|(i, j)| p.d2f(v[j * nr + i]))
            .collect();
        let mut s2 = vec![0.0; nr];
        let mut s3dr = vec![0.0; nr];
        for i in 1..=m {
            let dr = (v[i + 1] - v[i - 1]) / (2.0 * st.hr);
            s2[i] = s.d2(v[i]);
            s3dr[i] = s.d3(v[i]) * dr;
        }
        Self { fpp, s2, s3dr }
    }

    /// Jacobian action on `u` given on the full grid.
    fn apply_full(&self, st: &Stencil, u: &[f64], out: &mut [f64]) {
        st.apply(
            u,
            out,
            |k, x| self.fpp[k] * x,
            |i, x, dr| (self.s2[i] * x, self.s3dr[i] * x + self.s2[i] * dr),
        );
    }

    /// Jacobian action on an unknown vector (zero on the truncation sides).
    fn apply(&self, st: &Stencil, du: &[f64], out: &mut [f64]) {
        let mut full = Vec::new();
        scatter(st, du, &mut full);
        self.apply_full(st, &full, out);
    }
}

fn scatter(st: &Stencil, du: &[f64], full: &mut Vec<f64>) {
    full.clear();
    full.resize(st.nr * st.nh, 0.0);
    let m = st.nr - 2;
    for j in 0..st.nh - 1 {
        full[j * st.nr + 1..j * st.nr + 1 + m].copy_from_slice(&du[j * m..(j + 1) * m]);
    }
}

fn add_unknowns(st: &Stencil, v: &mut [f64], du: &[f64], scale: f64) {
    let m = st.nr - 2;
    for j in 0..st.nh - 1 {
        for k in 0..m {
            v[j * st.nr + k + 1] += scale * du[j * m + k];
        }
    }
}

/// One-sided defect of `∂_H v = cos α ∂_R v + σ(v) − g` along `H = 0`.
fn boundary_defect(st: &Stencil, v: &[f64], flux: impl Fn(usize, f64) -> f64) -> Vec<f64> {
    let nr = st.nr;
    let mut d = vec![0.0; nr];
    for i in 1..nr - 1 {
        let dh = (-3.0 * v[i] + 4.0 * v[nr + i] - v[2 * nr + i]) / (2.0 * st.hh);
        let dr = (v[i + 1] - v[i - 1]) / (2.0 * st.hr);
        d[i] = dh - st.c * dr - flux(i, v[i]);
    }
    d
}

fn weighted_max(grid: &HalfPlaneGrid, w: &DecayWeights, res: &[f64]) -> f64 {
    let m = grid.nodes_r - 2;
    res.iter()
        .enumerate()
        .map(|(k, r)| w.weight(grid.r(k % m + 1), grid.h(k / m)) * r.abs())
        .fold(0.0, f64::max)
}

/// Damped Newton on the discretized nonlinear problem.
///
/// Starts from the discrete profile `θ(R)` and stops when the max-norm of
/// the Newton update falls below `spec.newton_tol`; the update that meets
/// the tolerance is not applied.
pub fn solve_nonlinear_halfplane(p: &Potential, s: &BoundaryEnergy, spec: &HalfPlaneSpec) -> Result<HalfPlaneField> {
    let grid = spec.grid;
    grid.validate()?;
    spec.weights.validate(p)?;
    if !(spec.newton_tol > 0.0) {
        return Err(Error::Domain("newton tolerance must be positive".into()));
    }
    let alpha = s.alpha();
    let c = check_angle(alpha, &grid)?;
    let prof = solve_optimal_profile(p, grid.half_width.max(DEFAULT_HALF_LENGTH), DEFAULT_INTERVALS)?;
    let theta = discrete_profile(p, &prof, &grid)?;
    let st = Stencil::new(&grid, c);
    let pre = Preconditioner::new(&st, p, &theta)?;

    let mut v: Vec<f64> = (0..grid.nodes_h).flat_map(|_| theta.iter().copied()).collect();
    let mut f = residual_full(&st, p, s, &v);
    let mut fnorm = norm2(&f);
    let mut steps = 0;
    let mut growth = 0;
    let mut last_update = f64::INFINITY;
    loop {
        let lin = Linearization::at(&st, p, s, &v);
        let rhs: Vec<f64> = f.iter().map(|x| -x).collect();
        let mut du = vec![0.0; rhs.len()];
        gmres(
            |x, y| lin.apply(&st, x, y),
            |r, z| pre.apply(r, z),
            &rhs,
            &mut du,
            GMRES_TOL,
            GMRES_RESTART,
            GMRES_MAX,
        )?;
        let update = norm_inf(&du);
        if !update.is_finite() {
            return Err(Error::NonConvergence { steps, residual: norm_inf(&f) });
        }
        if update <= spec.newton_tol {
            break;
        }
        if steps >= MAX_NEWTON {
            return Err(Error::NonConvergence { steps, residual: norm_inf(&f) });
        }
        growth = if update > last_update { growth + 1 } else { 0 };
        if growth >= GROWTH_LIMIT {
            return Err(Error::NonConvergence { steps, residual: norm_inf(&f) });
        }
        last_update = update;
        let mut lambda = 1.0;
        let mut halvings = 0;
        loop {
            let mut trial = v.clone();
            add_unknowns(&st, &mut trial, &du, lambda);
            let ft = residual_full(&st, p, s, &trial);
            let tn = norm2(&ft);
            if (tn < fnorm && tn.is_finite()) || halvings == MAX_HALVINGS {
                v = trial;
                f = ft;
                fnorm = tn;
                break;
            }
            lambda *= 0.5;
            halvings += 1;
        }
        steps += 1;
    }

    let defect = boundary_defect(&st, &v, |_, x| s.d1(x));
    let weighted_boundary_residual = (1..grid.nodes_r - 1)
        .map(|i| spec.weights.weight(grid.r(i), 0.0) * defect[i].abs())
        .fold(0.0, f64::max);
    let theta_d1: Vec<f64> = (0..grid.nodes_r).map(|i| prof.eval_d1(grid.r(i))).collect();
    let field = HalfPlaneField {
        grid,
        alpha,
        cos_alpha: c,
        potential: p.clone(),
        sigma: s.clone(),
        theta,
        theta_d1,
        theta_norm_sq: prof.derivative_norm_sq(),
        newton_steps: steps,
        residual: norm_inf(&f),
        boundary_residual: norm_inf(&defect),
        weights: spec.weights,
        weighted_residual: weighted_max(&grid, &spec.weights, &f),
        weighted_boundary_residual,
        values: v,
    };
    if field.max_abs() > 1.0 + SLACK {
        return Err(Error::NonConvergence { steps, residual: field.max_abs() - 1.0 });
    }
    Ok(field)
}

/// Max-norm of the discrete nonlinear residual of arbitrary samples `v`,
/// with the truncation sides taken from `v` itself.
pub fn nonlinear_residual(p: &Potential, s: &BoundaryEnergy, grid: &HalfPlaneGrid, v: &[f64]) -> Result<f64> {
    grid.validate()?;
    if v.len() != grid.len() {
        return Err(Error::Precondition(format!("{} samples for a grid of {}", v.len(), grid.len())));
    }
    let st = Stencil::new(grid, crate::potential::cos_snapped(s.alpha()));
    Ok(norm_inf(&residual_full(&st, p, s, v)))
}

/// Linearized operator at `field` applied to `u` on the full grid, with the
/// truncation sides of `u` used as given. Returned in unknown layout: rows
/// `0..nodes_h−1`, columns `1..nodes_r−1`.
pub fn linearized_apply(field: &HalfPlaneField, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != field.grid.len() {
        return Err(Error::Precondition(format!("{} samples for a grid of {}", u.len(), field.grid.len())));
    }
    let st = Stencil::new(&field.grid, field.cos_alpha);
    let lin = Linearization::at(&st, &field.potential, &field.sigma, &field.values);
    let mut out = vec![0.0; field.grid.unknowns()];
    lin.apply_full(&st, u, &mut out);
    Ok(out)
}

/// `∂_R v` on the full grid: centered inside, one-sided second order on
/// the two vertical sides.
fn d_r(grid: &HalfPlaneGrid, v: &[f64]) -> Vec<f64> {
    let (nr, hr) = (grid.nodes_r, grid.h_r());
    let mut d = vec![0.0; v.len()];
    for j in 0..grid.nodes_h {
        let row = &v[j * nr..(j + 1) * nr];
        let out = &mut d[j * nr..(j + 1) * nr];
        out[0] = (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * hr);
        out[nr - 1] = (3.0 * row[nr - 1] - 4.0 * row[nr - 2] + row[nr - 3]) / (2.0 * hr);
        for i in 1..nr - 1 {
            out[i] = (row[i + 1] - row[i - 1]) / (2.0 * hr);
        }
    }
    d
}

/// `∂_H w` on the full grid with one-sided second order rows at top and
/// bottom.
fn d_h(grid: &HalfPlaneGrid, w: &[f64]) -> Vec<f64> {
    let (nr, nh, hh) = (grid.nodes_r, grid.nodes_h, grid.h_h());
    let mut d = vec![0.0; w.len()];
    for i in 0..nr {
        let at = |j: usize| w[j * nr + i];
        d[i] = (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * hh);
        d[(nh - 1) * nr + i] = (3.0 * at(nh - 1) - 4.0 * at(nh - 2) + at(nh - 3)) / (2.0 * hh);
        for j in 1..nh - 1 {
            d[j * nr + i] = (at(j + 1) - at(j - 1)) / (2.0 * hh);
        }
    }
    d
}

fn trapezoid_2d(grid: &HalfPlaneGrid, w: &[f64]) -> f64 {
    let nr = grid.nodes_r;
    let rows: Vec<f64> = (0..grid.nodes_h).map(|j| trapezoid(&w[j * nr..(j + 1) * nr], grid.h_r())).collect();
    trapezoid(&rows, grid.h_h())
}

/// Residual of the slice-flux identity at height `h0`.
///
/// The slice integral `S(H) = ∫ ∂_R v (∂_H v − cos α ∂_R v) dR` does not
/// depend on `H`. On the boundary it equals `σ_α(1) − σ_α(−1)` and far up
/// it equals `−cos α ∫(θ₀′)²`. Returns `S(h0) + cos α ∫(θ₀′)²`, with
/// `∂_H v` on the boundary row taken from the boundary condition.
pub fn check_flux_identity(field: &HalfPlaneField, h0: f64) -> Result<f64> {
    let g = &field.grid;
    let pos = h0 / g.h_h();
    let j = pos.round();
    if !(j >= 0.0 && j <= (g.nodes_h - 1) as f64 && (pos - j).abs() <= 1e-9) {
        return Err(Error::Domain(format!("H₀ = {h0} is not a grid row")));
    }
    let j = j as usize;
    let nr = g.nodes_r;
    let v = &field.values;
    let dr = d_r(g, v);
    let c = field.cos_alpha;
    let integrand: Vec<f64> = (0..nr)
        .map(|i| {
            let k = j * nr + i;
            let dh = if j == 0 {
                c * dr[k] + field.sigma.d1(v[k])
            } else if j == g.nodes_h - 1 {
                (3.0 * v[k] - 4.0 * v[k - nr] + v[k - 2 * nr]) / (2.0 * g.h_h())
            } else {
                (v[k + nr] - v[k - nr]) / (2.0 * g.h_h())
            };
            dr[k] * (dh - c * dr[k])
        })
        .collect();
    Ok(trapezoid(&integrand, g.h_r()) + c * field.theta_norm_sq)
}

/// Integrals entering the first-order boundary-layer coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCoefficients {
    pub z: Vec<f64>,
    /// `∫(∂_R v)² dR` at every grid height.
    pub i_slice: Vec<f64>,
    /// `∫∫ ∂_R∂_H v · ∂_R v`.
    pub i_mix: f64,
    pub b1_plus: f64,
    pub b1_minus: f64,
    /// `∫(θ₀′)²`.
    pub theta_norm_sq: f64,
    /// `∫ θ₀′ ∂_R v|_{H=0} dR`.
    pub kernel_overlap: f64,
}

pub fn expansion_coefficients(field: &HalfPlaneField) -> ExpansionCoefficients {
    let g = &field.grid;
    let (nr, nh) = (g.nodes_r, g.nodes_h);
    let v = &field.values;
    let dr = d_r(g, v);
    let mut drh = d_h(g, &dr);
    // boundary row from the tangential derivative of the boundary condition
    let hr2 = g.h_r() * g.h_r();
    for i in 1..nr - 1 {
        let drr = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / hr2;
        drh[i] = field.cos_alpha * drr + field.sigma.d2(v[i]) * dr[i];
    }
    let i_slice: Vec<f64> = (0..nh)
        .map(|j| {
            let sq: Vec<f64> = dr[j * nr..(j + 1) * nr].iter().map(|x| x * x).collect();
            trapezoid(&sq, g.h_r())
        })
        .collect();
    let prod: Vec<f64> = drh.iter().zip(&dr).map(|(a, b)| a * b).collect();
    let i_mix = trapezoid_2d(g, &prod);
    let sin = field.alpha.sin();
    let b1 = sin * (2.0 * i_mix + i_slice[0]);
    let overlap: Vec<f64> = (0..nr).map(|i| field.theta_d1[i] * dr[i]).collect();
    ExpansionCoefficients {
        z: (0..nh).map(|j| g.h(j)).collect(),
        i_slice,
        i_mix,
        b1_plus: b1,
        b1_minus: -b1,
        theta_norm_sq: field.theta_norm_sq,
        kernel_overlap: trapezoid(&overlap, g.h_r()),
    }
}

/// Solution of [`solve_linearized_halfplane`] for compatible data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHalfPlaneSolution {
    /// Row-major samples, zero on the truncation sides.
    pub values: Vec<f64>,
    pub compatibility_integral: f64,
    pub residual: f64,
    pub boundary_residual: f64,
    pub weighted_residual: f64,
    pub iterations: usize,
    /// Spectral spread of the separable part of the operator.
    pub condition_estimate: f64,
    pub conditioning_warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LinearHalfPlaneOutcome {
    Solved(LinearHalfPlaneSolution),
    /// `∫∫G ∂_R v + ∫g ∂_R v|_{H=0}` exceeded the tolerance.
    Rejected { integral: f64, tolerance: f64 },
}

impl LinearHalfPlaneOutcome {
    pub fn solution(&self) -> Option<&LinearHalfPlaneSolution> {
        match self {
            LinearHalfPlaneOutcome::Solved(s) => Some(s),
            LinearHalfPlaneOutcome::Rejected { .. } => None,
        }
    }
}

/// Solves `−div(A_α∇u) + f″(v)u = G`, `∂_H u = cos α ∂_R u + σ_α″(v)u − g`
/// at `H = 0`, `u = 0` on the truncation sides, around a converged `v`.
///
/// `big_g` holds samples on the full grid, `g` samples along `H = 0`.
/// Data whose compatibility integral against `∂_R v` exceeds `tol` is
/// rejected. The linear system is solved to relative residual `1e−12`.
pub fn solve_linearized_halfplane(
    field: &HalfPlaneField,
    big_g: &[f64],
    g: &[f64],
    tol: f64,
) -> Result<LinearHalfPlaneOutcome> {
    let grid = &field.grid;
    let (nr, nh) = (grid.nodes_r, grid.nodes_h);
    if big_g.len() != grid.len() || g.len() != nr {
        return Err(Error::Precondition(format!(
            "data sizes {} and {} do not match grid {nr}x{nh}",
            big_g.len(),
            g.len()
        )));
    }
    if let Some(k) = big_g.iter().chain(g).position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { what: "linearized half-plane data", at: k as f64 });
    }
    let dr = d_r(grid, &field.values);
    let bulk: Vec<f64> = big_g.iter().zip(&dr).map(|(a, b)| a * b).collect();
    let edge: Vec<f64> = g.iter().zip(&dr[..nr]).map(|(a, b)| a * b).collect();
    let integral = trapezoid_2d(grid, &bulk) + trapezoid(&edge, grid.h_r());
    if integral.abs() > tol {
        return Ok(LinearHalfPlaneOutcome::Rejected { integral, tolerance: tol });
    }

    let c = field.cos_alpha;
    let st = Stencil::new(grid, c);
    let m = nr - 2;
    let mut rhs = vec![0.0; grid.unknowns()];
    for j in 0..nh - 1 {
        for k in 0..m {
            rhs[j * m + k] = big_g[j * nr + k + 1];
        }
    }
    for k in 0..m {
        let i = k + 1;
        rhs[k] += 2.0 * g[i] / st.hh + 2.0 * c * (g[i + 1] - g[i - 1]) / (2.0 * st.hr);
    }
    let lin = Linearization::at(&st, &field.potential, &field.sigma, &field.values);
    let pre = Preconditioner::new(&st, &field.potential, &field.theta)?;
    let mut u = vec![0.0; rhs.len()];
    let stats = gmres(
        |x, y| lin.apply(&st, x, y),
        |r, z| pre.apply(r, z),
        &rhs,
        &mut u,
        GMRES_TOL,
        GMRES_RESTART,
        GMRES_MAX,
    )?;
    let mut full = Vec::new();
    scatter(&st, &u, &mut full);
    let mut applied = vec![0.0; rhs.len()];
    lin.apply_full(&st, &full, &mut applied);
    let res: Vec<f64> = applied.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    let defect = boundary_defect(&st, &full, |i, x| lin.s2[i] * x - g[i]);
    let condition_estimate = pre.spread;
    let conditioning_warning = (condition_estimate > 1e12)
        .then(|| format!("operator spread {condition_estimate:e} exceeds 1e12"));
    Ok(LinearHalfPlaneOutcome::Solved(LinearHalfPlaneSolution {
        values: full,
        compatibility_integral: integral,
        residual: norm_inf(&res),
        boundary_residual: norm_inf(&defect),
        weighted_residual: weighted_max(grid, &field.weights, &res),
        iterations: stats.iterations,
        condition_estimate,
        conditioning_warning,
    }))
}
