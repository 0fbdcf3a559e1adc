//! Allen–Cahn flow on the unit disk with the nonlinear Robin condition
//! `∂_N u + σ_α′(u)/ε = 0`.
//!
//! Space is discretised by finite volumes on a polar grid: one disk cell
//! around the centre, annular sectors around the ring nodes `r_i = iΔr`, and
//! half-width sectors at `r = 1` that carry the boundary flux. The diffusion
//! is implicit, the bulk reaction and the boundary nonlinearity explicit,
//! the latter with a linear stabilisation `S(u^{n+1} − u^n)` on the ring.
//! The implicit operator is invariant under rotations, so each step is a
//! real FFT in `φ` followed by one tridiagonal solve per Fourier mode.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::linalg::TridiagonalLu;
use crate::potential::{BoundaryEnergy, Potential};

/// Resolution guard: `ε ≥ RESOLUTION_FACTOR · h`.
pub const RESOLUTION_FACTOR: f64 = 4.0;
/// Default time step as a multiple of `ε²`.
pub const DEFAULT_DT_FACTOR: f64 = 0.1;

/// Polar grid of the unit disk with its finite-volume weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    n_r: usize,
    n_phi: usize,
    dr: f64,
    dphi: f64,
    /// Cell areas by ring, index 0 is the centre cell.
    mass: Vec<f64>,
    /// Flux coefficient between ring `i` and `i + 1`, `i ≥ 1`.
    radial: Vec<f64>,
    /// Flux coefficient between neighbouring sectors of ring `i`.
    angular: Vec<f64>,
    /// Flux coefficient between the centre and each node of ring 1.
    center: f64,
}

impl PolarGrid {
    pub fn new(n_r: usize, n_phi: usize) -> Result<Self> {
        if n_r < 2 || n_phi < 4 {
            return Err(Error::Precondition(format!("polar grid needs n_r ≥ 2 and n_phi ≥ 4, got {n_r} × {n_phi}")));
        }
        let dr = 1.0 / n_r as f64;
        let dphi = std::f64::consts::TAU / n_phi as f64;
        let mut mass = vec![0.0; n_r + 1];
        let mut radial = vec![0.0; n_r + 1];
        let mut angular = vec![0.0; n_r + 1];
        mass[0] = std::f64::consts::PI * dr * dr / 4.0;
        for i in 1..n_r {
            let r = i as f64 * dr;
            mass[i] = r * dr * dphi;
            radial[i] = (r + 0.5 * dr) * dphi / dr;
            angular[i] = dr / (r * dphi);
        }
        mass[n_r] = 0.5 * dr * (1.0 - 0.25 * dr) * dphi;
        angular[n_r] = 0.5 * dr / dphi;
        Ok(Self { n_r, n_phi, dr, dphi, mass, radial, angular, center: 0.5 * dphi })
    }

    /// Grid with at least six cells per `ε` radially and `N_φ` the next power
    /// of two above `6π/ε`.
    pub fn for_eps(eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Domain(format!("ε must be positive, got {eps}")));
        }
        let n_r = (6.0 / eps).ceil() as usize;
        let n_phi = ((6.0 * std::f64::consts::PI / eps).ceil() as usize).next_power_of_two();
        Self::new(n_r, n_phi)
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    pub fn dphi(&self) -> f64 {
        self.dphi
    }

    /// `max(Δr, Δφ/2)`: the radial spacing or the arc spacing at mid radius.
    pub fn resolution(&self) -> f64 {
        self.dr.max(0.5 * self.dphi)
    }

    /// Number of unknowns including the centre.
    pub fn len(&self) -> usize {
        1 + self.n_r * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn radius(&self, i: usize) -> f64 {
        i as f64 * self.dr
    }

    pub fn angle(&self, j: usize) -> f64 {
        j as f64 * self.dphi
    }

    /// Node `(i, j)`, `i ∈ 1..=n_r`.
    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        let (r, p) = (self.radius(i), self.angle(j));
        Vec2::new(r * p.cos(), r * p.sin())
    }

    /// Area of the cell around a node of ring `i` (`i = 0` is the centre).
    pub fn cell_area(&self, i: usize) -> f64 {
        self.mass[i]
    }

    /// Boundary length carried by each node of the outer ring.
    pub fn boundary_weight(&self) -> f64 {
        self.dphi
    }

    pub(crate) fn check_resolves(&self, eps: f64) -> Result<()> {
        let h = self.resolution();
        if eps < RESOLUTION_FACTOR * h {
            return Err(Error::Resolution(format!(
                "ε = {eps} is below {RESOLUTION_FACTOR}·h = {} on a {} × {} grid",
                RESOLUTION_FACTOR * h,
                self.n_r,
                self.n_phi
            )));
        }
        Ok(())
    }
}

/// Potential, boundary energy and `ε` of one Allen–Cahn problem.
#[derive(Debug, Clone)]
pub struct AcModel {
    potential: Potential,
    /// `None` is the homogeneous Neumann problem.
    boundary: Option<BoundaryEnergy>,
    eps: f64,
    stabilization: f64,
    reaction_bound: f64,
}

impl AcModel {
    pub fn new(potential: Potential, boundary: Option<BoundaryEnergy>, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Domain(format!("ε must be positive, got {eps}")));
        }
        let r0 = potential.sign_radius();
        let samples = 4001;
        let grid = |k: usize, lo: f64, hi: f64| lo + (hi - lo) * k as f64 / (samples - 1) as f64;
        let reaction_bound = (0..samples).map(|k| potential.d2f(grid(k, -r0, r0)).abs()).fold(0.0, f64::max);
        let stabilization = match &boundary {
            Some(b) => (0..samples).map(|k| b.d2(grid(k, -r0, r0)).abs()).fold(0.0, f64::max),
            None => 0.0,
        };
        if !reaction_bound.is_finite() || !stabilization.is_finite() {
            return Err(Error::NonFinite { what: "second derivative bound", at: r0 });
        }
        Ok(Self { potential, boundary, eps, stabilization, reaction_bound })
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn boundary(&self) -> Option<&BoundaryEnergy> {
        self.boundary.as_ref()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Largest stable time step, `ε² / sup|f″|` over `[−R₀, R₀]`.
    pub fn dt_max(&self) -> f64 {
        self.eps * self.eps / self.reaction_bound.max(f64::MIN_POSITIVE)
    }

    /// Coefficient `S` of the boundary stabilisation, `sup|σ_α″|`.
    pub fn stabilization(&self) -> f64 {
        self.stabilization
    }

    fn sigma_d1(&self, u: f64) -> f64 {
        self.boundary.as_ref().map_or(0.0, |b| b.d1(u))
    }
}

/// Nodal field on a [`PolarGrid`]. Ring values are stored ring by ring,
/// `values[(i − 1)·n_φ + j]`.
#[derive(Debug, Clone)]
pub struct Field2D {
    grid: Arc<PolarGrid>,
    model: Arc<AcModel>,
    center: f64,
    values: Vec<f64>,
    t: f64,
}

impl Field2D {
    /// Samples `f` at the grid nodes.
    pub fn from_fn<F>(grid: Arc<PolarGrid>, model: Arc<AcModel>, f: F) -> Result<Self>
    where
        F: Fn(Vec2) -> f64 + Sync,
    {
        grid.check_resolves(model.eps)?;
        let n_phi = grid.n_phi;
        let mut values = vec![0.0; grid.n_r * n_phi];
        values.par_chunks_mut(n_phi).enumerate().for_each(|(k, ring)| {
            for (j, v) in ring.iter_mut().enumerate() {
                *v = f(grid.node(k + 1, j));
            }
        });
        let center = f(Vec2::new(0.0, 0.0));
        Self::from_values(grid, model, center, values, 0.0)
    }

    pub fn constant(grid: Arc<PolarGrid>, model: Arc<AcModel>, value: f64) -> Result<Self> {
        Self::from_fn(grid, model, |_| value)
    }

    pub fn from_values(grid: Arc<PolarGrid>, model: Arc<AcModel>, center: f64, values: Vec<f64>, t: f64) -> Result<Self> {
        if values.len() != grid.n_r * grid.n_phi {
            return Err(Error::Precondition(format!(
                "expected {} ring values, got {}",
                grid.n_r * grid.n_phi,
                values.len()
            )));
        }
        grid.check_resolves(model.eps)?;
        if !center.is_finite() {
            return Err(Error::NonFinite { what: "field value", at: 0.0 });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "field value", at: grid.radius(k / grid.n_phi + 1) });
        }
        Ok(Self { grid, model, center, values, t })
    }

    pub fn grid(&self) -> &Arc<PolarGrid> {
        &self.grid
    }

    pub fn model(&self) -> &Arc<AcModel> {
        &self.model
    }

    pub fn eps(&self) -> f64 {
        self.model.eps
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at ring `i ∈ 1..=n_r`, angle index `j` (taken modulo `n_φ`).
    pub fn value(&self, i: usize, j: usize) -> f64 {
        let n = self.grid.n_phi;
        self.values[(i - 1) * n + j % n]
    }

    pub fn ring(&self, i: usize) -> &[f64] {
        let n = self.grid.n_phi;
        &self.values[(i - 1) * n..i * n]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(self.center.abs(), |m, v| m.max(v.abs()))
    }

    /// All nodes with their values, centre first.
    pub fn nodes(&self) -> impl Iterator<Item = (Vec2, f64)> + '_ {
        let g = &self.grid;
        std::iter::once((Vec2::new(0.0, 0.0), self.center)).chain(
            (1..=g.n_r).flat_map(move |i| (0..g.n_phi).map(move |j| (g.node(i, j), self.value(i, j)))),
        )
    }
}

/// `∫ ½|∇u|² + f(u)/ε² dx + ∫_∂Ω σ_α(u)/ε`, with the finite-volume
/// gradient form, cell-area quadrature for `f` and the trapezoid rule on
/// the outer ring.
pub fn energy(u: &Field2D) -> f64 {
    let g = &*u.grid;
    let m = &*u.model;
    let p = &m.potential;
    let eps2 = m.eps * m.eps;
    let n_phi = g.n_phi;
    let per_ring: Vec<f64> = (1..=g.n_r)
        .into_par_iter()
        .map(|i| {
            let ring = u.ring(i);
            let mut e = 0.0;
            for j in 0..n_phi {
                let v = ring[j];
                let next = ring[(j + 1) % n_phi];
                e += 0.5 * g.angular[i] * (next - v) * (next - v);
                if i < g.n_r {
                    let out = u.value(i + 1, j);
                    e += 0.5 * g.radial[i] * (out - v) * (out - v);
                } else if let Some(b) = &m.boundary {
                    e += g.dphi * b.sigma(v) / m.eps;
                }
                if i == 1 {
                    e += 0.5 * g.center * (v - u.center) * (v - u.center);
                }
                e += g.mass[i] * p.f(v) / eps2;
            }
            e
        })
        .collect();
    g.mass[0] * p.f(u.center) / eps2 + per_ring.iter().sum::<f64>()
}

/// Source terms for manufactured solutions: `bulk(x, t)` is added to the
/// right-hand side of the equation and `boundary(x, t)` to the right-hand
/// side of the Robin condition.
pub struct Forcing<'a> {
    pub bulk: &'a (dyn Fn(Vec2, f64) -> f64 + Sync),
    pub boundary: &'a (dyn Fn(Vec2, f64) -> f64 + Sync),
}

/// Factored `K + a·M + b·B` for the stiffness `K`, the cell masses `M` and
/// the outer-ring identity `B`.
pub(crate) struct PolarSolver {
    grid: Arc<PolarGrid>,
    /// Mode 0 includes the centre as its first unknown.
    modes: Vec<TridiagonalLu>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl PolarSolver {
    pub(crate) fn new(grid: Arc<PolarGrid>, mass_shift: f64, boundary_shift: f64) -> Result<Self> {
        let g = &*grid;
        let (n_r, n_phi) = (g.n_r, g.n_phi);
        let modes = (0..=n_phi / 2)
            .into_par_iter()
            .map(|m| {
                let lambda = 2.0 - 2.0 * (std::f64::consts::TAU * m as f64 / n_phi as f64).cos();
                let offset = usize::from(m == 0);
                let size = n_r + offset;
                let (mut lower, mut diag, mut upper) = (vec![0.0; size], vec![0.0; size], vec![0.0; size]);
                if m == 0 {
                    diag[0] = g.mass[0] * mass_shift + n_phi as f64 * g.center;
                    upper[0] = -g.center;
                    lower[1] = -(n_phi as f64) * g.center;
                }
                for i in 1..=n_r {
                    let k = i - 1 + offset;
                    let mut d = g.mass[i] * mass_shift + g.angular[i] * lambda;
                    if i == 1 {
                        d += g.center;
                    }
                    if i > 1 {
                        d += g.radial[i - 1];
                        lower[k] = -g.radial[i - 1];
                    }
                    if i < n_r {
                        d += g.radial[i];
                        upper[k] = -g.radial[i];
                    } else {
                        d += boundary_shift;
                    }
                    diag[k] = d;
                }
                TridiagonalLu::new(&lower, &diag, &upper)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n_phi);
        let inverse = planner.plan_fft_inverse(n_phi);
        Ok(Self { grid, modes, forward, inverse })
    }

    /// Solves in place. `rhs` holds the ring values (real parts), the
    /// centre right-hand side is passed separately; returns the centre
    /// value. On return the real parts of `rhs` hold the solution.
    pub(crate) fn solve(&self, center_rhs: f64, rhs: &mut [Complex<f64>]) -> f64 {
        let g = &*self.grid;
        let (n_r, n_phi) = (g.n_r, g.n_phi);
        rhs.par_chunks_mut(n_phi).for_each(|ring| self.forward.process(ring));

        // gather mode columns, solve, scatter back
        let half = n_phi / 2;
        let solved: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..=half)
            .into_par_iter()
            .map(|m| {
                let offset = usize::from(m == 0);
                let lu = &self.modes[m];
                let mut re = vec![0.0; n_r + offset];
                let mut im = vec![0.0; n_r + offset];
                if m == 0 {
                    re[0] = center_rhs;
                }
                for k in 0..n_r {
                    let c = rhs[k * n_phi + m];
                    re[k + offset] = c.re;
                    im[k + offset] = c.im;
                }
                lu.solve_in_place(&mut re);
                lu.solve_in_place(&mut im);
                let center = if m == 0 { re[0] } else { 0.0 };
                (re[offset..].to_vec(), im[offset..].to_vec(), center)
            })
            .collect();
        let mut center = 0.0;
        for (m, (re, im, c)) in solved.into_iter().enumerate() {
            if m == 0 {
                center = c;
            }
            for k in 0..n_r {
                rhs[k * n_phi + m] = Complex::new(re[k], im[k]);
                if m != 0 && m != half {
                    rhs[k * n_phi + n_phi - m] = Complex::new(re[k], -im[k]);
                }
            }
        }
        rhs.par_chunks_mut(n_phi).for_each(|ring| self.inverse.process(ring));
        let scale = 1.0 / n_phi as f64;
        rhs.iter_mut().for_each(|c| *c = Complex::new(c.re * scale, 0.0));
        center
    }
}

/// `K u` for the finite-volume stiffness; ring entries go to `out`, the
/// centre entry is returned.
pub(crate) fn apply_stiffness(g: &PolarGrid, center: f64, values: &[f64], out: &mut [f64]) -> f64 {
    let (n_r, n_phi) = (g.n_r, g.n_phi);
    let at = |i: usize, j: usize| values[(i - 1) * n_phi + j];
    out.par_chunks_mut(n_phi).enumerate().for_each(|(k, row)| {
        let i = k + 1;
        for (j, o) in row.iter_mut().enumerate() {
            let v = at(i, j);
            let prev = at(i, (j + n_phi - 1) % n_phi);
            let next = at(i, (j + 1) % n_phi);
            let mut a = g.angular[i] * (2.0 * v - prev - next);
            a += if i > 1 { g.radial[i - 1] * (v - at(i - 1, j)) } else { g.center * (v - center) };
            if i < n_r {
                a += g.radial[i] * (v - at(i + 1, j));
            }
            *o = a;
        }
    });
    (0..n_phi).map(|j| g.center * (center - at(1, j))).sum()
}

/// Entries `(row, col, value)` of the stiffness in the global layout:
/// index 0 is the centre, ring node `(i, j)` is `1 + (i − 1)·n_φ + j`.
pub(crate) fn stiffness_entries(g: &PolarGrid) -> Vec<(usize, usize, f64)> {
    let (n_r, n_phi) = (g.n_r, g.n_phi);
    let idx = |i: usize, j: usize| 1 + (i - 1) * n_phi + j;
    let mut out = Vec::with_capacity(5 * n_r * n_phi + 2 * n_phi + 1);
    out.push((0, 0, n_phi as f64 * g.center));
    for j in 0..n_phi {
        out.push((0, idx(1, j), -g.center));
    }
    for i in 1..=n_r {
        for j in 0..n_phi {
            let k = idx(i, j);
            let mut d = 2.0 * g.angular[i];
            out.push((k, idx(i, (j + n_phi - 1) % n_phi), -g.angular[i]));
            out.push((k, idx(i, (j + 1) % n_phi), -g.angular[i]));
            if i > 1 {
                d += g.radial[i - 1];
                out.push((k, idx(i - 1, j), -g.radial[i - 1]));
            } else {
                d += g.center;
                out.push((k, 0, -g.center));
            }
            if i < n_r {
                d += g.radial[i];
                out.push((k, idx(i + 1, j), -g.radial[i]));
            }
            out.push((k, k, d));
        }
    }
    out
}

/// Factored implicit operator for a fixed grid, model and time step.
pub struct Stepper {
    grid: Arc<PolarGrid>,
    model: Arc<AcModel>,
    dt: f64,
    solver: PolarSolver,
}

impl std::fmt::Debug for Stepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stepper").field("dt", &self.dt).field("modes", &self.solver.modes.len()).finish()
    }
}

impl Stepper {
    pub fn new(grid: Arc<PolarGrid>, model: Arc<AcModel>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Precondition(format!("time step must be positive, got {dt}")));
        }
        if dt > model.dt_max() {
            return Err(Error::Precondition(format!("time step {dt} exceeds dt_max = {}", model.dt_max())));
        }
        grid.check_resolves(model.eps)?;
        let boundary_shift = model.stabilization * grid.dphi / model.eps;
        let solver = PolarSolver::new(grid.clone(), 1.0 / dt, boundary_shift)?;
        Ok(Self { grid, model, dt, solver })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, u: &Field2D) -> Result<Field2D> {
        self.advance(u, None)
    }

    pub fn step_forced(&self, u: &Field2D, forcing: &Forcing<'_>) -> Result<Field2D> {
        self.advance(u, Some(forcing))
    }

    fn advance(&self, u: &Field2D, forcing: Option<&Forcing<'_>>) -> Result<Field2D> {
        if !Arc::ptr_eq(&u.grid, &self.grid) && *u.grid != *self.grid {
            return Err(Error::Precondition("field lives on a different grid".into()));
        }
        let g = &*self.grid;
        let model = &*self.model;
        let (n_r, n_phi) = (g.n_r, g.n_phi);
        let eps = model.eps;
        let eps2 = eps * eps;
        let t_next = u.t + self.dt;
        let p = &model.potential;

        // right-hand side for the increment δ = u^{n+1} − u^n
        let mut center_rhs = -g.mass[0] * p.df(u.center) / eps2;
        let mut rhs: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); n_r * n_phi];
        rhs.par_chunks_mut(n_phi).enumerate().for_each(|(k, out)| {
            let i = k + 1;
            let ring = u.ring(i);
            for j in 0..n_phi {
                let v = ring[j];
                let prev = ring[(j + n_phi - 1) % n_phi];
                let next = ring[(j + 1) % n_phi];
                let mut flux = g.angular[i] * (prev - v) + g.angular[i] * (next - v);
                if i > 1 {
                    flux += g.radial[i - 1] * (u.value(i - 1, j) - v);
                } else {
                    flux += g.center * (u.center - v);
                }
                if i < n_r {
                    flux += g.radial[i] * (u.value(i + 1, j) - v);
                }
                let mut r = flux - g.mass[i] * p.df(v) / eps2;
                if i == n_r {
                    let s = model.sigma_d1(v);
                    if s != 0.0 {
                        r -= g.dphi * s / eps;
                    }
                }
                if let Some(fc) = forcing {
                    let x = g.node(i, j);
                    r += g.mass[i] * (fc.bulk)(x, t_next);
                    if i == n_r {
                        r += g.dphi * (fc.boundary)(x, t_next);
                    }
                }
                out[j] = Complex::new(r, 0.0);
            }
        });
        for j in 0..n_phi {
            center_rhs += g.center * (u.value(1, j) - u.center);
        }
        if let Some(fc) = forcing {
            center_rhs += g.mass[0] * (fc.bulk)(Vec2::new(0.0, 0.0), t_next);
        }

        let delta_center = self.solver.solve(center_rhs, &mut rhs);
        let values: Vec<f64> = u.values.iter().zip(&rhs).map(|(v, d)| v + d.re).collect();
        Field2D::from_values(u.grid.clone(), u.model.clone(), u.center + delta_center, values, t_next)
    }
}

/// One step; factors the implicit operator on every call. Use a
/// [`Stepper`] for repeated steps.
pub fn step_ac(u: &Field2D, dt: f64) -> Result<Field2D> {
    Stepper::new(u.grid.clone(), u.model.clone(), dt)?.step(u)
}

/// Trajectory of a run with the per-step energy log.
#[derive(Debug, Clone)]
pub struct AcTrajectory {
    pub snapshots: Vec<Field2D>,
    /// `(t, E)` after every step, starting with the initial state.
    pub energy: Vec<(f64, f64)>,
    /// Largest `‖u‖_∞` over all steps.
    pub max_abs: f64,
    pub steps: usize,
}

/// Runs from `u0` for `duration`, keeping every `stride`-th state and the
/// final one. The step is shrunk so that it divides the duration exactly.
pub fn run_ac(u0: &Field2D, duration: f64, dt: f64, stride: usize) -> Result<AcTrajectory> {
    run_ac_with(u0, duration, dt, stride, |_| Ok(()))
}

/// [`run_ac`] with a callback on every accepted state.
pub fn run_ac_with<C>(u0: &Field2D, duration: f64, dt: f64, stride: usize, mut observe: C) -> Result<AcTrajectory>
where
    C: FnMut(&Field2D) -> Result<()>,
{
    if !(duration >= 0.0) {
        return Err(Error::Precondition(format!("duration must be non-negative, got {duration}")));
    }
    observe(u0)?;
    let mut traj = AcTrajectory {
        snapshots: vec![u0.clone()],
        energy: vec![(u0.t, energy(u0))],
        max_abs: u0.max_abs(),
        steps: 0,
    };
    if duration == 0.0 {
        return Ok(traj);
    }
    if stride == 0 {
        return Err(Error::Precondition("snapshot stride must be positive".into()));
    }
    let steps = (duration / dt - 1e-9).ceil().max(1.0) as usize;
    let dt = duration / steps as f64;
    let stepper = Stepper::new(u0.grid.clone(), u0.model.clone(), dt)?;
    let mut cur = u0.clone();
    for k in 1..=steps {
        let mut next = stepper.step(&cur)?;
        next.t = u0.t + k as f64 * dt;
        observe(&next)?;
        traj.energy.push((next.t, energy(&next)));
        traj.max_abs = traj.max_abs.max(next.max_abs());
        if k % stride == 0 || k == steps {
            traj.snapshots.push(next.clone());
        }
        cur = next;
    }
    traj.steps = steps;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{build_sigma, DEFAULT_SUPPORT_MARGIN};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn model(eps: f64, alpha: Option<f64>) -> Arc<AcModel> {
        let p = Potential::quartic();
        let b = alpha.map(|a| build_sigma(&p, a, DEFAULT_SUPPORT_MARGIN).unwrap());
        Arc::new(AcModel::new(p, b, eps).unwrap())
    }

    #[test]
    fn cell_areas_sum_to_pi() {
        for (nr, np) in [(4, 8), (17, 64), (64, 256)] {
            let g = PolarGrid::new(nr, np).unwrap();
            let total = g.mass[0] + (1..=nr).map(|i| g.mass[i] * np as f64).sum::<f64>();
            assert!((total - PI).abs() < 1e-12, "{total}");
        }
    }

    #[test]
    fn grid_for_eps_resolves_eps() {
        for eps in [0.1, 0.08, 0.05, 0.04, 0.02] {
            let g = PolarGrid::for_eps(eps).unwrap();
            assert!(eps >= RESOLUTION_FACTOR * g.resolution());
            assert!(g.n_phi().is_power_of_two());
        }
        // the default 256 × 512 grid at ε = 0.04
        let g = Arc::new(PolarGrid::new(256, 512).unwrap());
        assert!(Field2D::constant(g, model(0.04, None), 1.0).is_ok());
    }

    #[test]
    fn unresolved_eps_is_rejected() {
        let g = Arc::new(PolarGrid::new(16, 32).unwrap());
        let err = Field2D::constant(g, model(0.05, None), 1.0).unwrap_err();
        assert!(matches!(err, Error::Resolution(_)));
    }

    #[test]
    fn oversized_step_is_rejected() {
        let eps = 0.1;
        let g = Arc::new(PolarGrid::for_eps(eps).unwrap());
        let m = model(eps, None);
        assert!(matches!(Stepper::new(g, m.clone(), 2.0 * m.dt_max()), Err(Error::Precondition(_))));
    }

    #[test]
    fn constant_one_is_exactly_stationary() {
        let eps = 0.1;
        let g = Arc::new(PolarGrid::for_eps(eps).unwrap());
        let u = Field2D::constant(g, model(eps, Some(1.2)), 1.0).unwrap();
        let next = step_ac(&u, 0.1 * eps * eps).unwrap();
        assert_eq!(next.center(), 1.0);
        assert!(next.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn constant_energies() {
        let eps = 0.1;
        let g = Arc::new(PolarGrid::for_eps(eps).unwrap());
        let m = model(eps, Some(1.0));
        let b = m.boundary().unwrap().clone();
        let one = Field2D::constant(g.clone(), m.clone(), 1.0).unwrap();
        let e1 = 2.0 * PI * b.sigma(1.0) / eps;
        assert!((energy(&one) - e1).abs() < 1e-10 * e1.abs());
        let zero = Field2D::constant(g, m, 0.0).unwrap();
        let e0 = PI / (2.0 * eps * eps) + 2.0 * PI * b.sigma(0.0) / eps;
        assert!((energy(&zero) - e0).abs() < 1e-10 * e0);
    }

    #[test]
    fn right_angle_matches_neumann_bitwise() {
        let eps = 0.1;
        let g = Arc::new(PolarGrid::for_eps(eps).unwrap());
        let init = |x: Vec2| (x.y / eps).tanh() * (1.0 - 0.3 * x.x);
        let robin = Field2D::from_fn(g.clone(), model(eps, Some(FRAC_PI_2)), init).unwrap();
        let neumann = Field2D::from_fn(g, model(eps, None), init).unwrap();
        let dt = 0.1 * eps * eps;
        let a = step_ac(&robin, dt).unwrap();
        let b = step_ac(&neumann, dt).unwrap();
        assert_eq!(a.center().to_bits(), b.center().to_bits());
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn diameter_profile_is_nearly_stationary() {
        let eps = 0.05;
        let g = Arc::new(PolarGrid::for_eps(eps).unwrap());
        let u0 = Field2D::from_fn(g.clone(), model(eps, Some(FRAC_PI_2)), |x| (x.y / eps).tanh()).unwrap();
        let traj = run_ac(&u0, 0.01, 0.1 * eps * eps, usize::MAX).unwrap();
        let last = traj.snapshots.last().unwrap();
        // zero crossing along the vertical line through the centre
        let j = g.n_phi() / 4;
        let mut drift: f64 = 0.0;
        for jj in [j, 3 * j] {
            for i in 1..g.n_r() {
                let (a, b) = (last.value(i, jj), last.value(i + 1, jj));
                assert!(a.signum() == b.signum() || a == 0.0);
            }
        }
        // the odd symmetry keeps the zero set on y = 0: check the values there
        for jj in [0, g.n_phi() / 2] {
            for i in 1..=g.n_r() {
                drift = drift.max(last.value(i, jj).abs());
            }
        }
        assert!(drift < 1e-3, "{drift}");
        let e = &traj.energy;
        assert!(e.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-10 * w[0].1.abs()));
    }

    #[test]
    fn maximum_bound_and_energy_decay_with_contact_angle() {
        let eps = 0.1;
        let g = Arc::new(PolarGrid::for_eps(eps).unwrap());
        let u0 = Field2D::from_fn(g, model(eps, Some(1.2)), |x| ((x.y - 0.2 * x.x) / eps).tanh()).unwrap();
        let traj = run_ac(&u0, 0.02, 0.1 * eps * eps, 10).unwrap();
        assert!(traj.max_abs <= 1.0 + 1e-8, "{}", traj.max_abs);
        let e = &traj.energy;
        assert!(e.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-10 * w[0].1.abs()));
        assert!(e.last().unwrap().1 < e[0].1);
    }

    #[test]
    fn zero_duration() {
        let eps = 0.1;
        let g = Arc::new(PolarGrid::for_eps(eps).unwrap());
        let u0 = Field2D::constant(g, model(eps, None), 1.0).unwrap();
        let traj = run_ac(&u0, 0.0, 1e-3, 1).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.energy.len(), 1);
    }

    #[test]
    fn manufactured_solution_converges_at_second_order() {
        // u* = e^{-t} sin(x + 2y) / 2 with ε = 1 and a contact angle of 1.2
        let eps = 1.0;
        let m = model(eps, Some(1.2));
        let b = m.boundary().unwrap().clone();
        let exact = |x: Vec2, t: f64| 0.5 * (-t).exp() * (x.x + 2.0 * x.y).sin();
        let bulk = |x: Vec2, t: f64| {
            let u = exact(x, t);
            -u + 5.0 * u + 2.0 * u * u * u - 2.0 * u
        };
        let boundary = move |x: Vec2, t: f64| {
            let dn = 0.5 * (-t).exp() * (x.x + 2.0 * x.y).cos() * (x.x + 2.0 * x.y);
            dn + b.d1(exact(x, t)) / eps
        };
        let forcing = Forcing { bulk: &bulk, boundary: &boundary };
        let horizon = 0.1;
        let errors: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&n| {
                let g = Arc::new(PolarGrid::new(n, 4 * n).unwrap());
                let mut u = Field2D::from_fn(g.clone(), m.clone(), |x| exact(x, 0.0)).unwrap();
                let steps = (horizon * 4.0 * (n * n) as f64).round() as usize;
                let stepper = Stepper::new(g, m.clone(), horizon / steps as f64).unwrap();
                for _ in 0..steps {
                    u = stepper.step_forced(&u, &forcing).unwrap();
                }
                u.nodes().map(|(x, v)| (v - exact(x, horizon)).abs()).fold(0.0, f64::max)
            })
            .collect();
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "{errors:?}");
        }
    }
}
