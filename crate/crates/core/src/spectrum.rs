//! Smallest eigenvalue of the Allen–Cahn operator linearized at an
//! approximate solution, on the polar finite-volume grid.
//!
//! The form is
//! `B(ψ, ψ) = ∫|∇ψ|² + f″(u)ψ²/ε² + ∫_∂Ω σ_α″(u)ψ²/ε`
//! with the cell masses as quadrature, and `Bψ = λMψ` is solved by block
//! LOBPCG preconditioned with the rotation-invariant operator
//! `K + κM + sB_∂`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::acsolver::{apply_stiffness, stiffness_entries, AcModel, Field2D, PolarGrid, PolarSolver};
use crate::error::{Error, Result};
use crate::geometry::{project_to_curve, FrontCurve};
use crate::harness::{cutoff, well_prepared_initial};
use crate::mcf::{unit_disk_chord, DEFAULT_SEGMENTS};
use crate::potential::{build_sigma, Potential, DEFAULT_SUPPORT_MARGIN};
use crate::profile::{solve_optimal_profile, Profile, DEFAULT_HALF_LENGTH, DEFAULT_INTERVALS};

/// Relative eigen tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_BLOCK: usize = 4;
pub const DEFAULT_SEED: u64 = 0x5eed;
/// Blending radius of the approximate solution in the sweep.
pub const DEFAULT_DELTA0: f64 = 0.3;
pub const DEFAULT_PROBES: usize = 50;
/// Radial cells per `ε` at the coarsest `ε` of a sweep.
pub const DEFAULT_CELLS_PER_EPS: f64 = 6.0;
/// Cells per `ε` grow like `(ε_max/ε)^p` along a sweep.
pub const DEFAULT_CELLS_EXPONENT: f64 = 0.5;
const MAX_ITER: usize = 3000;
const GRAM_DROP: f64 = 1e-13;
/// Cosine modes in the random tangential factor of the probes.
const PROBE_MODES: usize = 6;

/// Quadratic form and mass of the linearized operator.
///
/// Vectors hold the centre at index 0 and ring node `(i, j)` at
/// `1 + (i − 1)·n_φ + j`.
#[derive(Debug, Clone)]
pub struct LinearizedForm {
    grid: Arc<PolarGrid>,
    eps: f64,
    /// `m_k f″(u_k)/ε²`.
    reaction: Vec<f64>,
    /// `Δφ σ_α″(u)/ε` on the outer ring.
    boundary: Vec<f64>,
    mass: Vec<f64>,
}

/// Assembles `B` and `M` at `ua`.
pub fn assemble_form(ua: &Field2D) -> Result<LinearizedForm> {
    if !ua.center().is_finite() || ua.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "approximate solution", at: ua.t() });
    }
    let grid = ua.grid().clone();
    let model: &AcModel = ua.model();
    let eps = model.eps();
    let p = model.potential();
    let (n_r, n_phi) = (grid.n_r(), grid.n_phi());
    let mut mass = Vec::with_capacity(1 + n_r * n_phi);
    mass.push(grid.cell_area(0));
    for i in 1..=n_r {
        mass.extend(std::iter::repeat(grid.cell_area(i)).take(n_phi));
    }
    let mut reaction = vec![0.0; mass.len()];
    reaction[0] = mass[0] * p.d2f(ua.center()) / (eps * eps);
    reaction[1..]
        .par_iter_mut()
        .zip(ua.values())
        .zip(&mass[1..])
        .for_each(|((r, &u), &m)| *r = m * p.d2f(u) / (eps * eps));
    let boundary = match model.boundary() {
        Some(s) => ua.ring(n_r).iter().map(|&u| grid.boundary_weight() * s.d2(u) / eps).collect(),
        None => vec![0.0; n_phi],
    };
    Ok(LinearizedForm { grid, eps, reaction, boundary, mass })
}

impl LinearizedForm {
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn grid(&self) -> &Arc<PolarGrid> {
        &self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `Δφ σ_α″(u)/ε` along the outer ring.
    pub fn boundary_diagonal(&self) -> &[f64] {
        &self.boundary
    }

    /// `y = B x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n_phi = self.grid.n_phi();
        y[0] = apply_stiffness(&self.grid, x[0], &x[1..], &mut y[1..]) + self.reaction[0] * x[0];
        y[1..].par_iter_mut().zip(&x[1..]).zip(&self.reaction[1..]).for_each(|((o, &v), &r)| *o += r * v);
        let last = y.len() - n_phi;
        for (j, b) in self.boundary.iter().enumerate() {
            y[last + j] += b * x[last + j];
        }
    }

    /// `B(x, x)`.
    pub fn quadratic(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.apply(x, &mut y);
        dot(x, &y)
    }

    /// `xᵀMx`.
    pub fn mass_norm_sq(&self, x: &[f64]) -> f64 {
        psum(x.len(), |k| self.mass[k] * x[k] * x[k])
    }

    pub fn rayleigh(&self, x: &[f64]) -> f64 {
        self.quadratic(x) / self.mass_norm_sq(x)
    }

    /// Entries `(row, col, value)` of `B`, sorted.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let n_phi = self.grid.n_phi();
        let last = self.len() - n_phi;
        let mut out = stiffness_entries(&self.grid);
        for (k, &r) in self.reaction.iter().enumerate() {
            out.push((k, k, r));
        }
        for (j, &b) in self.boundary.iter().enumerate() {
            out.push((last + j, last + j, b));
        }
        out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(out.len());
        for (i, j, v) in out {
            match merged.last_mut() {
                Some(e) if e.0 == i && e.1 == j => e.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        merged
    }

    /// `max |B_ij − B_ji| / max |B_ij|` over the pattern.
    pub fn symmetry_defect(&self) -> f64 {
        let entries = self.entries();
        let scale = entries.iter().fold(0.0f64, |m, e| m.max(e.2.abs()));
        let map: HashMap<(usize, usize), f64> = entries.iter().map(|&(i, j, v)| ((i, j), v)).collect();
        let worst = entries
            .iter()
            .map(|&(i, j, v)| match map.get(&(j, i)) {
                Some(w) => (v - w).abs(),
                None => v.abs(),
            })
            .fold(0.0, f64::max);
        worst / scale
    }

    /// Gershgorin lower bound for the spectrum of `M^{-1/2} B M^{-1/2}`.
    pub fn gershgorin_lower(&self) -> f64 {
        let n = self.len();
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n];
        for (i, j, v) in self.entries() {
            if i == j {
                diag[i] = v / self.mass[i];
            } else {
                off[i] += v.abs() / (self.mass[i] * self.mass[j]).sqrt();
            }
        }
        diag.iter().zip(&off).map(|(d, o)| d - o).fold(f64::INFINITY, f64::min)
    }

    /// Largest reaction coefficient, at least `1/ε²`.
    pub fn reaction_scale(&self) -> f64 {
        self.reaction
            .iter()
            .zip(&self.mass)
            .map(|(r, m)| r / m)
            .fold(1.0 / (self.eps * self.eps), f64::max)
    }
}

const SUM_CHUNK: usize = 4096;

/// Parallel sum with a fixed chunking, so the result does not depend on
/// the thread count or on scheduling.
fn psum<F: Fn(usize) -> f64 + Sync>(n: usize, f: F) -> f64 {
    let parts: Vec<f64> = (0..n.div_ceil(SUM_CHUNK))
        .into_par_iter()
        .map(|c| (c * SUM_CHUNK..((c + 1) * SUM_CHUNK).min(n)).map(&f).sum())
        .collect();
    parts.iter().sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    psum(a.len(), |k| a[k] * b[k])
}

/// Smallest eigenpair of `Bψ = λMψ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinEigen {
    pub value: f64,
    pub iterations: usize,
    /// `‖Bψ − λMψ‖_{M⁻¹}` with `ψᵀMψ = 1`.
    pub residual: f64,
    /// Scale the residual is measured against.
    pub scale: f64,
    pub gershgorin_lower: f64,
    #[serde(skip)]
    pub vector: Vec<f64>,
}

/// Block LOBPCG for the smallest eigenvalue.
///
/// Stops when `‖Bψ − λMψ‖_{M⁻¹} ≤ tol·κ` for the lowest Ritz pair, `κ` the
/// largest reaction coefficient. The start block comes from a fixed seed.
pub fn min_eigenvalue(form: &LinearizedForm, tol: f64) -> Result<MinEigen> {
    min_eigenvalue_with(form, tol, DEFAULT_BLOCK, DEFAULT_SEED)
}

pub fn min_eigenvalue_with(form: &LinearizedForm, tol: f64, block: usize, seed: u64) -> Result<MinEigen> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("eigen tolerance must be positive, got {tol}")));
    }
    let n = form.len();
    let k = block.clamp(1, n);
    let kappa = form.reaction_scale();
    let shift = form.boundary.iter().fold(0.0f64, |m, &b| m.max(b));
    let solver = PolarSolver::new(form.grid.clone(), kappa, shift)?;
    let gershgorin = form.gershgorin_lower();
    let mass = &form.mass;

    let precond = |r: &[f64]| -> Vec<f64> {
        let mut rhs: Vec<Complex<f64>> = r[1..].iter().map(|&v| Complex::new(v, 0.0)).collect();
        let c = solver.solve(r[0], &mut rhs);
        std::iter::once(c).chain(rhs.iter().map(|z| z.re)).collect()
    };
    let mdot = |a: &[f64], b: &[f64]| -> f64 { psum(n, |k| a[k] * b[k] * mass[k]) };
    let ritz = |s: &[Vec<f64>]| -> Result<(DMatrix<f64>, Vec<f64>)> {
        let bs: Vec<Vec<f64>> = s
            .iter()
            .map(|v| {
                let mut y = vec![0.0; n];
                form.apply(v, &mut y);
                y
            })
            .collect();
        ritz_coefficients(s, &bs, &mdot, k)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let (c, mut lambda) = ritz(&start)?;
    let mut x = combine(&start, &c, 0..start.len());
    let mut p: Vec<Vec<f64>> = Vec::new();
    let mut bx = vec![vec![0.0; n]; x.len()];

    for it in 0..MAX_ITER {
        for (v, y) in x.iter().zip(bx.iter_mut()) {
            form.apply(v, y);
        }
        let r: Vec<Vec<f64>> = (0..x.len())
            .map(|c| bx[c].par_iter().zip(&x[c]).zip(mass).map(|((b, v), m)| b - lambda[c] * m * v).collect())
            .collect();
        let res0 = psum(n, |k| r[0][k] * r[0][k] / mass[k]).sqrt();
        if !res0.is_finite() {
            return Err(Error::Eigen(format!("non-finite residual at iteration {it}")));
        }
        if res0 <= tol * kappa {
            return Ok(MinEigen {
                value: lambda[0],
                iterations: it,
                residual: res0,
                scale: kappa,
                gershgorin_lower: gershgorin,
                vector: x.swap_remove(0),
            });
        }
        let mut w: Vec<Vec<f64>> = r.iter().map(|v| precond(v)).collect();
        // M-orthogonal to the current block
        for wv in w.iter_mut() {
            for xv in &x {
                let a = mdot(xv, wv);
                wv.par_iter_mut().zip(xv).for_each(|(o, v)| *o -= a * v);
            }
        }
        let nx = x.len();
        let mut basis = x.clone();
        basis.append(&mut w);
        basis.append(&mut p);
        let (c, values) = ritz(&basis)?;
        x = combine(&basis, &c, 0..basis.len());
        p = combine(&basis, &c, nx..basis.len());
        lambda = values;
    }
    Err(Error::Eigen(format!(
        "LOBPCG did not reach tolerance {tol:e} in {MAX_ITER} iterations (Gershgorin bound {gershgorin:e})"
    )))
}

/// Columns of `c` applied to the rows `rows` of the basis.
fn combine(basis: &[Vec<f64>], c: &DMatrix<f64>, rows: std::ops::Range<usize>) -> Vec<Vec<f64>> {
    let n = basis[0].len();
    (0..c.ncols())
        .map(|col| {
            let mut out = vec![0.0; n];
            for row in rows.clone() {
                let a = c[(row, col)];
                if a != 0.0 {
                    out.par_iter_mut().zip(&basis[row]).for_each(|(o, v)| *o += a * v);
                }
            }
            out
        })
        .collect()
}

/// Coefficients of the lowest `k` Ritz vectors of the span of `s` and
/// their values. Nearly dependent directions are dropped; the Ritz vectors
/// come out M-orthonormal.
fn ritz_coefficients<D>(s: &[Vec<f64>], bs: &[Vec<f64>], mdot: &D, k: usize) -> Result<(DMatrix<f64>, Vec<f64>)>
where
    D: Fn(&[f64], &[f64]) -> f64,
{
    let m = s.len();
    let mut gm = DMatrix::zeros(m, m);
    let mut gb = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let a = mdot(&s[i], &s[j]);
            let b = 0.5 * (dot(&s[i], &bs[j]) + dot(&s[j], &bs[i]));
            gm[(i, j)] = a;
            gm[(j, i)] = a;
            gb[(i, j)] = b;
            gb[(j, i)] = b;
        }
    }
    let d: Vec<f64> = (0..m).map(|i| if gm[(i, i)] > 0.0 { 1.0 / gm[(i, i)].sqrt() } else { 0.0 }).collect();
    for i in 0..m {
        for j in 0..m {
            gm[(i, j)] *= d[i] * d[j];
            gb[(i, j)] *= d[i] * d[j];
        }
    }
    let em = SymmetricEigen::new(gm);
    let top = em.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let keep: Vec<usize> = (0..m).filter(|&i| em.eigenvalues[i] > GRAM_DROP * top).collect();
    if keep.len() < k.min(m) {
        return Err(Error::Eigen(format!("search space collapsed to {} directions", keep.len())));
    }
    let mut c = DMatrix::zeros(m, keep.len());
    for (col, &i) in keep.iter().enumerate() {
        let scale = 1.0 / em.eigenvalues[i].sqrt();
        for row in 0..m {
            c[(row, col)] = em.eigenvectors[(row, i)] * scale;
        }
    }
    let reduced = c.transpose() * &gb * &c;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let ea = SymmetricEigen::new(reduced);
    let mut order: Vec<usize> = (0..ea.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| ea.eigenvalues[a].total_cmp(&ea.eigenvalues[b]));
    order.truncate(k);
    let mut y = DMatrix::zeros(keep.len(), order.len());
    for (col, &i) in order.iter().enumerate() {
        y.set_column(col, &ea.eigenvectors.column(i));
    }
    let mut coef = c * y;
    for (i, di) in d.iter().enumerate() {
        for col in 0..order.len() {
            coef[(i, col)] *= di;
        }
    }
    Ok((coef, order.iter().map(|&i| ea.eigenvalues[i]).collect()))
}

/// ε-sweep of the smallest eigenvalue at the leading-order approximate
/// solution around a stationary chord.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumConfig {
    pub alpha: f64,
    pub eps: Vec<f64>,
    pub delta0: f64,
    pub tol: f64,
    pub probes: usize,
    pub seed: u64,
    pub cells_per_eps: f64,
    pub cells_exponent: f64,
}

impl SpectrumConfig {
    pub fn new(alpha: f64, eps: Vec<f64>) -> Self {
        Self {
            alpha,
            eps,
            delta0: DEFAULT_DELTA0,
            tol: DEFAULT_TOL,
            probes: DEFAULT_PROBES,
            seed: DEFAULT_SEED,
            cells_per_eps: DEFAULT_CELLS_PER_EPS,
            cells_exponent: DEFAULT_CELLS_EXPONENT,
        }
    }

    /// Polar grid for one `ε` of the sweep.
    pub fn grid(&self, eps: f64) -> Result<PolarGrid> {
        let cells = self.cells_per_eps * (self.eps[0] / eps).powf(self.cells_exponent);
        let n_r = (cells / eps).ceil() as usize;
        let n_phi = ((cells * std::f64::consts::PI / eps).ceil() as usize).next_power_of_two();
        PolarGrid::new(n_r, n_phi)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < std::f64::consts::PI) {
            return Err(Error::Domain(format!("contact angle {} outside (0, π)", self.alpha)));
        }
        if self.eps.is_empty() || self.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Domain("ε values must lie in (0, 1)".into()));
        }
        if self.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Domain("ε values must be strictly decreasing".into()));
        }
        if !(self.delta0 > 0.0 && self.delta0 < 0.5) {
            return Err(Error::Domain(format!("δ₀ must lie in (0, 0.5), got {}", self.delta0)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!("eigen tolerance must be positive, got {}", self.tol)));
        }
        if !(self.cells_per_eps >= 4.0) || !(self.cells_exponent >= 0.0) {
            return Err(Error::Domain("need at least 4 cells per ε and a nonnegative cell exponent".into()));
        }
        Ok(())
    }
}

/// One ε of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub eps: f64,
    pub n_r: usize,
    pub n_phi: usize,
    pub lambda_min: f64,
    pub iterations: usize,
    pub residual: f64,
    pub gershgorin_lower: f64,
    /// Rayleigh quotient of `η θ₀′(r/ε)`.
    pub rayleigh_profile: f64,
    /// Smallest `(B + C‖·‖² − c₀ε‖∇_τ·‖²)/‖·‖²` over the random probes.
    pub probe_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub config: SpectrumConfig,
    pub approximation: String,
    pub records: Vec<SpectrumRecord>,
    /// `C` fitted on the coarsest ε.
    pub c_fit: f64,
    /// `c₀` fitted on the coarsest ε.
    pub c0_fit: f64,
    /// `max |λ_min| / min |λ_min|` over the sweep.
    pub lambda_ratio: f64,
    /// `1/ε²` ratio across the sweep.
    pub inverse_eps_sq_ratio: f64,
}

/// Form at `uA ≡ value` on the default grid for `ε`.
pub fn constant_form(eps: f64, alpha: f64, value: f64) -> Result<LinearizedForm> {
    let model = model_for(eps, alpha)?;
    let grid = Arc::new(PolarGrid::for_eps(eps)?);
    assemble_form(&Field2D::constant(grid, model, value)?)
}

fn model_for(eps: f64, alpha: f64) -> Result<Arc<AcModel>> {
    let p = Potential::quartic();
    let sigma = build_sigma(&p, alpha, DEFAULT_SUPPORT_MARGIN)?;
    Ok(Arc::new(AcModel::new(p, Some(sigma), eps)?))
}

/// `(r, s)` of every node within `2δ₀` of the front.
fn chart(grid: &PolarGrid, front: &FrontCurve, delta0: f64) -> Result<Vec<Option<(f64, f64)>>> {
    let (n_r, n_phi) = (grid.n_r(), grid.n_phi());
    let mut pts = vec![grid.node(0, 0)];
    for i in 1..=n_r {
        pts.extend((0..n_phi).map(|j| grid.node(i, j)));
    }
    pts.par_iter()
        .map(|&x| {
            let c = project_to_curve(front, x, 2.0 * delta0)?;
            Ok((c.r.abs() < 2.0 * delta0).then_some((c.r, c.s)))
        })
        .collect()
}

/// Random tube probe `η(r/δ₀)θ₀′(r/ε)(1 + b r/ε)P(s)`. For a straight
/// front `s` is affine in arclength, so `∂_τ = (2/L)∂_s`.
struct Probe {
    b: f64,
    a: [f64; PROBE_MODES],
}

impl Probe {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let mut a = [0.0; PROBE_MODES];
        for (k, v) in a.iter_mut().enumerate() {
            *v = rng.gen_range(-1.0..1.0) / (1.0 + k as f64);
        }
        Self { b: rng.gen_range(-1.0..1.0), a }
    }

    fn tangential(&self, s: f64) -> (f64, f64) {
        let w = std::f64::consts::FRAC_PI_2;
        self.a.iter().enumerate().fold((0.0, 0.0), |(v, d), (k, &a)| {
            let arg = k as f64 * w * (s + 1.0);
            (v + a * arg.cos(), d - a * k as f64 * w * arg.sin())
        })
    }

    /// Values and tangential derivative on the nodes.
    fn sample(
        &self,
        nodes: &[Option<(f64, f64)>],
        profile: &Profile,
        eps: f64,
        delta0: f64,
        length: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        nodes
            .iter()
            .map(|c| match *c {
                Some((r, s)) => {
                    let radial = cutoff(r / delta0) * profile.eval_d1(r / eps) * (1.0 + self.b * r / eps);
                    let (p, dp) = self.tangential(s);
                    (radial * p, radial * dp * 2.0 / length)
                }
                None => (0.0, 0.0),
            })
            .unzip()
    }
}

/// Runs the sweep. The probe constants are fitted on the first (coarsest)
/// ε and reused for the others.
pub fn spectrum_sweep(cfg: &SpectrumConfig) -> Result<SpectrumReport> {
    cfg.validate()?;
    let profile = solve_optimal_profile(&Potential::quartic(), DEFAULT_HALF_LENGTH, DEFAULT_INTERVALS)?;
    let front = unit_disk_chord(cfg.alpha, DEFAULT_SEGMENTS, 0.0)?;
    let length = front.length();
    let mut records: Vec<SpectrumRecord> = Vec::with_capacity(cfg.eps.len());
    let (mut c_fit, mut c0_fit) = (0.0, 0.0);
    for (idx, &eps) in cfg.eps.iter().enumerate() {
        let model = model_for(eps, cfg.alpha)?;
        let grid = Arc::new(cfg.grid(eps)?);
        let ua = well_prepared_initial(grid.clone(), model, &front, &profile, cfg.delta0)?;
        let form = assemble_form(&ua)?;
        let eig = min_eigenvalue_with(&form, cfg.tol, DEFAULT_BLOCK, cfg.seed)?;
        let nodes = chart(&grid, &front, cfg.delta0)?;

        let ground: Vec<f64> = nodes
            .iter()
            .map(|c| c.map_or(0.0, |(r, _)| cutoff(r / cfg.delta0) * profile.eval_d1(r / eps)))
            .collect();
        let rayleigh_profile = form.rayleigh(&ground);

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9);
        // (B, ‖ψ‖², ε‖∇_τψ‖²) per probe
        let samples: Vec<(f64, f64, f64)> = (0..cfg.probes)
            .map(|_| {
                let probe = Probe::draw(&mut rng);
                let (psi, dtau) = probe.sample(&nodes, &profile, eps, cfg.delta0, length);
                (form.quadratic(&psi), form.mass_norm_sq(&psi), eps * form.mass_norm_sq(&dtau))
            })
            .collect();
        if idx == 0 {
            c_fit = 2.0 * eig.value.abs().max(1.0);
            c0_fit = 0.5
                * samples
                    .iter()
                    .filter(|s| s.2 > 0.0)
                    .map(|&(b, m, t)| (b + c_fit * m) / t)
                    .fold(f64::INFINITY, f64::min);
            if !c0_fit.is_finite() {
                c0_fit = 0.0;
            }
        }
        let probe_margin = samples
            .iter()
            .map(|&(b, m, t)| (b + c_fit * m - c0_fit * t) / m)
            .fold(f64::INFINITY, f64::min);
        records.push(SpectrumRecord {
            eps,
            n_r: grid.n_r(),
            n_phi: grid.n_phi(),
            lambda_min: eig.value,
            iterations: eig.iterations,
            residual: eig.residual,
            gershgorin_lower: eig.gershgorin_lower,
            rayleigh_profile,
            probe_margin,
        });
    }
    let abs: Vec<f64> = records.iter().map(|r| r.lambda_min.abs()).collect();
    let lambda_ratio = abs.iter().fold(0.0f64, |a, &b| a.max(b)) / abs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let (e0, e1) = (cfg.eps[0], cfg.eps[cfg.eps.len() - 1]);
    Ok(SpectrumReport {
        config: cfg.clone(),
        approximation: "leading-order approximate solution".into(),
        records,
        c_fit,
        c0_fit,
        lambda_ratio,
        inverse_eps_sq_ratio: (e0 / e1).powi(2),
    })
}
