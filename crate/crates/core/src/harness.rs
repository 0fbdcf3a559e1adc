//! Sharp-interface experiments: well-prepared initial data, zero-set
//! extraction, distances between curves and the ε-sweep that compares the
//! Allen–Cahn zero set with the front-tracked curvature flow.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acsolver::{self, AcModel, Field2D, PolarGrid};
use crate::error::{Error, Result};
use crate::geometry::{polyline_length, project_to_curve, FrontCurve, Vec2};
use crate::linalg::fit_line;
use crate::mcf;
use crate::potential::{build_sigma_with, BumpShape, Potential, DEFAULT_QUAD_TOL};
use crate::profile::{solve_optimal_profile, Profile, DEFAULT_HALF_LENGTH, DEFAULT_INTERVALS};

/// Default inner radius `δ₀` of the blending cutoff.
pub const DEFAULT_DELTA0: f64 = 0.1;
/// Number of comparison intervals in `[0, T]`.
pub const SNAPSHOT_INTERVALS: usize = 10;

/// Smooth cutoff: 1 on `[−1, 1]`, 0 outside `(−2, 2)`.
pub fn cutoff(x: f64) -> f64 {
    let psi = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let a = x.abs();
    if a <= 1.0 {
        return 1.0;
    }
    if a >= 2.0 {
        return 0.0;
    }
    let (p, q) = (psi(2.0 - a), psi(a - 1.0));
    p / (p + q)
}

/// `η(r/δ₀)·θ₀(r/ε) + (1 − η(r/δ₀))·sign(r)` with `r` the signed distance
/// to `front`.
pub fn well_prepared_initial(
    grid: Arc<PolarGrid>,
    model: Arc<AcModel>,
    front: &FrontCurve,
    profile: &Profile,
    delta0: f64,
) -> Result<Field2D> {
    if !(delta0 > 0.0) {
        return Err(Error::Domain(format!("δ₀ must be positive, got {delta0}")));
    }
    if front.nodes.len() < 3 {
        return Err(Error::Precondition("front needs at least 3 nodes".into()));
    }
    let eps = model.eps();
    let eval = |x: Vec2| {
        let r = project_to_curve(front, x, 2.0 * delta0).map(|c| c.r).unwrap_or(0.0);
        let eta = cutoff(r / delta0);
        let sign = if r >= 0.0 { 1.0 } else { -1.0 };
        if eta == 0.0 {
            sign
        } else {
            eta * profile.eval(r / eps) + (1.0 - eta) * sign
        }
    };
    Field2D::from_fn(grid, model, eval)
}

/// Residual `max |∂_N u + σ_α′(u)/ε|` of the Robin condition on the outer
/// ring, with a one-sided radial difference.
pub fn robin_residual(u: &Field2D) -> f64 {
    let g = u.grid();
    let n = g.n_r();
    let model = u.model();
    (0..g.n_phi())
        .map(|j| {
            let (outer, inner) = (u.value(n, j), u.value(n - 1, j));
            let dn = (outer - inner) / g.dr();
            let s = model.boundary().map_or(0.0, |b| b.d1(outer));
            (dn + s / u.eps()).abs()
        })
        .fold(0.0, f64::max)
}

/// Polylines of the zero level set, longest first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ZeroSet {
    pub polylines: Vec<Vec<Vec2>>,
}

impl ZeroSet {
    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty()
    }

    pub fn longest(&self) -> Option<&[Vec2]> {
        self.polylines.first().map(|p| p.as_slice())
    }
}

/// Zero level set of `u` by marching squares on the polar cells and
/// marching triangles on the fan around the centre, with linear
/// interpolation along cell edges.
pub fn extract_zero_set(u: &Field2D) -> ZeroSet {
    let g = u.grid();
    let (n_r, n_phi) = (g.n_r(), g.n_phi());
    let id = |i: usize, j: usize| if i == 0 { 0 } else { 1 + (i - 1) * n_phi + j % n_phi };
    let pos = |i: usize, j: usize| if i == 0 { Vec2::new(0.0, 0.0) } else { g.node(i, j) };
    let val = |i: usize, j: usize| if i == 0 { u.center() } else { u.value(i, j) };

    type Edge = (usize, usize);
    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    let mut points: HashMap<Edge, Vec2> = HashMap::new();
    let mut cross = |a: (usize, usize), b: (usize, usize)| -> Option<Edge> {
        let (va, vb) = (val(a.0, a.1), val(b.0, b.1));
        if (va >= 0.0) == (vb >= 0.0) {
            return None;
        }
        let (ia, ib) = (id(a.0, a.1), id(b.0, b.1));
        let key = (ia.min(ib), ia.max(ib));
        points.entry(key).or_insert_with(|| {
            let t = va / (va - vb);
            pos(a.0, a.1) + (pos(b.0, b.1) - pos(a.0, a.1)) * t
        });
        Some(key)
    };

    for j in 0..n_phi {
        let tri = [(0, 0), (1, j), (1, j + 1)];
        let hits: Vec<Edge> = (0..3).filter_map(|k| cross(tri[k], tri[(k + 1) % 3])).collect();
        if hits.len() == 2 {
            segments.push((hits[0], hits[1]));
        }
    }
    for i in 1..n_r {
        for j in 0..n_phi {
            let quad = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let hits: Vec<Edge> = (0..4).filter_map(|k| cross(quad[k], quad[(k + 1) % 4])).collect();
            match hits.len() {
                2 => segments.push((hits[0], hits[1])),
                4 => {
                    // saddle: the cell mean decides which corners connect
                    let mean = quad.iter().map(|&(a, b)| val(a, b)).sum::<f64>() / 4.0;
                    let first_positive = val(quad[0].0, quad[0].1) >= 0.0;
                    if (mean >= 0.0) == first_positive {
                        // corners 0 and 2 connected, 1 and 3 cut off
                        segments.push((hits[0], hits[1]));
                        segments.push((hits[2], hits[3]));
                    } else {
                        segments.push((hits[3], hits[0]));
                        segments.push((hits[1], hits[2]));
                    }
                }
                _ => {}
            }
        }
    }
    let mut polylines = chain_segments(&segments, &points);
    polylines.sort_by(|a, b| polyline_length(b).total_cmp(&polyline_length(a)));
    ZeroSet { polylines }
}

fn chain_segments(segments: &[((usize, usize), (usize, usize))], points: &HashMap<(usize, usize), Vec2>) -> Vec<Vec<Vec2>> {
    let mut incident: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (k, &(a, b)) in segments.iter().enumerate() {
        incident.entry(a).or_default().push(k);
        incident.entry(b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();
    let walk = |start_seg: usize, start_edge: (usize, usize), used: &mut Vec<bool>| {
        let mut line = vec![points[&start_edge]];
        let mut edge = start_edge;
        let mut seg = start_seg;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            edge = if a == edge { b } else { a };
            line.push(points[&edge]);
            match incident[&edge].iter().find(|&&s| !used[s]) {
                Some(&next) => seg = next,
                None => break,
            }
        }
        line
    };
    // open chains start at edges touched once; iterate in segment order
    // so the result does not depend on hash order
    for k in 0..segments.len() {
        if used[k] {
            continue;
        }
        for end in [segments[k].0, segments[k].1] {
            if !used[k] && incident[&end].len() == 1 {
                out.push(walk(k, end, &mut used));
            }
        }
    }
    for k in 0..segments.len() {
        if !used[k] {
            out.push(walk(k, segments[k].0, &mut used));
        }
    }
    out
}

fn point_segment_distance(x: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let len_sq = d.norm_sq();
    let t = if len_sq == 0.0 { 0.0 } else { ((x - a).dot(d) / len_sq).clamp(0.0, 1.0) };
    x.dist(a + d * t)
}

/// Distance from `x` to the polyline `b`.
pub fn distance_to_polyline(x: Vec2, b: &[Vec2]) -> f64 {
    if b.len() == 1 {
        return x.dist(b[0]);
    }
    b.windows(2).map(|w| point_segment_distance(x, w[0], w[1])).fold(f64::INFINITY, f64::min)
}

#[derive(PartialEq)]
struct Interval {
    bound: f64,
    a: Vec2,
    b: Vec2,
    da: f64,
    db: f64,
}

impl Eq for Interval {}

impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Interval {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound)
    }
}

/// `sup_{x ∈ a} dist(x, b)` by branch and bound on the segments of `a`.
/// A piece `[p, q]` is bounded above by the smaller of the Lipschitz bound
/// and `min_k max(d(p, b_k), d(q, b_k))`, since the distance to a single
/// segment `b_k` is convex.
pub fn directed_hausdorff(a: &[Vec2], b: &[Vec2]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("Hausdorff distance of an empty polyline".into()));
    }
    let segs: Vec<(Vec2, Vec2)> =
        if b.len() == 1 { vec![(b[0], b[0])] } else { b.windows(2).map(|w| (w[0], w[1])).collect() };
    let d = |x: Vec2| segs.iter().map(|&(s, t)| point_segment_distance(x, s, t)).fold(f64::INFINITY, f64::min);
    let bound = |p: Vec2, q: Vec2, dp: f64, dq: f64| {
        let convex = segs
            .iter()
            .map(|&(s, t)| point_segment_distance(p, s, t).max(point_segment_distance(q, s, t)))
            .fold(f64::INFINITY, f64::min);
        convex.min(0.5 * (dp + dq + p.dist(q)))
    };
    let mut best = a.iter().map(|&x| d(x)).fold(0.0, f64::max);
    let scale = polyline_length(a).max(polyline_length(b)).max(1.0);
    let tol = 1e-13 * scale;
    let mut heap = BinaryHeap::new();
    for w in a.windows(2) {
        let (da, db) = (d(w[0]), d(w[1]));
        heap.push(Interval { bound: bound(w[0], w[1], da, db), a: w[0], b: w[1], da, db });
    }
    while let Some(iv) = heap.pop() {
        if iv.bound <= best + tol {
            break;
        }
        let m = (iv.a + iv.b) * 0.5;
        let dm = d(m);
        best = best.max(dm);
        for (p, q, dp, dq) in [(iv.a, m, iv.da, dm), (m, iv.b, dm, iv.db)] {
            let ub = bound(p, q, dp, dq);
            if ub > best + tol {
                heap.push(Interval { bound: ub, a: p, b: q, da: dp, db: dq });
            }
        }
    }
    Ok(best)
}

/// Symmetric Hausdorff distance between two polylines.
pub fn hausdorff(a: &[Vec2], b: &[Vec2]) -> Result<f64> {
    Ok(directed_hausdorff(a, b)?.max(directed_hausdorff(b, a)?))
}

/// `‖u − θ₀(r/ε)‖_{L²}` over the nodes with `|r| ≤ δ₀`, each weighted by
/// its cell area.
pub fn profile_error(u: &Field2D, front: &FrontCurve, profile: &Profile, delta0: f64) -> Result<f64> {
    if front.nodes.len() < 3 {
        return Err(Error::Precondition("front needs at least 3 nodes".into()));
    }
    let g = u.grid();
    let eps = u.eps();
    let term = |x: Vec2, v: f64, area: f64| -> f64 {
        match project_to_curve(front, x, delta0) {
            Ok(c) if c.in_tube => {
                let e = v - profile.eval(c.r / eps);
                area * e * e
            }
            _ => 0.0,
        }
    };
    let rings: Vec<f64> = (1..=g.n_r())
        .into_par_iter()
        .map(|i| {
            let area = g.cell_area(i);
            u.ring(i).iter().enumerate().map(|(j, &v)| term(g.node(i, j), v, area)).sum()
        })
        .collect();
    let total = term(Vec2::new(0.0, 0.0), u.center(), g.cell_area(0)) + rings.iter().sum::<f64>();
    Ok(total.sqrt())
}

/// Least-squares rate `p` in `log d = p log ε + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    pub std_error: f64,
    pub rms_residual: f64,
    pub points: usize,
}

pub fn fit_rate(eps: &[f64], values: &[f64]) -> Result<RateFit> {
    if eps.len() != values.len() || eps.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 (ε, value) pairs, got {}", eps.len().min(values.len()))));
    }
    if eps.iter().chain(values).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Fit("rate fit needs positive finite data".into()));
    }
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = values.iter().map(|e| e.ln()).collect();
    let line = fit_line(&x, &y)?;
    Ok(RateFit {
        rate: line.slope,
        intercept: line.intercept,
        std_error: line.slope_std_error,
        rms_residual: line.rms_residual,
        points: eps.len(),
    })
}

/// Shape of the initial front of a sweep on the unit disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialFront {
    /// Amplitude of the `sin²` bump added to the stationary chord.
    pub bump: f64,
    pub segments: usize,
}

impl Default for InitialFront {
    fn default() -> Self {
        Self { bump: 0.05, segments: mcf::DEFAULT_SEGMENTS }
    }
}

/// Parameters of [`convergence_study`].
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub potential: Potential,
    pub alpha: f64,
    pub support_margin: f64,
    pub bump_shape: BumpShape,
    /// Strictly decreasing, at least three values.
    pub eps: Vec<f64>,
    pub horizon: f64,
    /// AC time step as a multiple of `ε²` at the largest `ε`.
    pub dt_factor: f64,
    /// The AC step is `dt_factor·ε²·(ε/ε_max)^dt_exponent`.
    pub dt_exponent: f64,
    /// MCF time step as a multiple of the squared node spacing.
    pub mcf_dt_factor: f64,
    pub front: InitialFront,
    pub delta0: f64,
    /// Radial cells per `ε` at the largest `ε`; the angular count follows
    /// as in [`PolarGrid::for_eps`].
    pub cells_per_eps: f64,
    /// Cells per `ε` grow like `(ε_max/ε)^cells_exponent`.
    pub cells_exponent: f64,
}

impl StudyConfig {
    pub fn new(alpha: f64, eps: Vec<f64>, horizon: f64) -> Self {
        Self {
            potential: Potential::quartic(),
            alpha,
            support_margin: crate::potential::DEFAULT_SUPPORT_MARGIN,
            bump_shape: BumpShape::Exponential,
            eps,
            horizon,
            dt_factor: acsolver::DEFAULT_DT_FACTOR,
            mcf_dt_factor: mcf::DEFAULT_DT_FACTOR,
            front: InitialFront::default(),
            delta0: DEFAULT_DELTA0,
            dt_exponent: 1.0,
            cells_per_eps: 6.0,
            cells_exponent: 0.5,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.eps.len() < 3 {
            return Err(Error::Domain(format!("ε list needs at least 3 values, got {}", self.eps.len())));
        }
        if self.eps.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::Domain("ε values must be positive".into()));
        }
        if self.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Domain("ε values must be strictly decreasing".into()));
        }
        if !(self.horizon > 0.0) || !(self.dt_factor > 0.0) || !(self.mcf_dt_factor > 0.0) {
            return Err(Error::Domain("horizon and time-step factors must be positive".into()));
        }
        if !(self.dt_exponent >= 0.0) || !(self.cells_exponent >= 0.0) {
            return Err(Error::Domain("refinement exponents must be non-negative".into()));
        }
        if !(self.cells_per_eps >= acsolver::RESOLUTION_FACTOR) {
            return Err(Error::Domain(format!("cells per ε must be at least {}", acsolver::RESOLUTION_FACTOR)));
        }
        Ok(())
    }

    fn grid(&self, eps: f64) -> Result<PolarGrid> {
        let cells = self.cells_per_eps * (self.eps[0] / eps).powf(self.cells_exponent);
        let n_r = (cells / eps).ceil() as usize;
        let n_phi = ((cells * std::f64::consts::PI / eps).ceil() as usize).next_power_of_two();
        PolarGrid::new(n_r, n_phi)
    }

    fn ac_dt(&self, eps: f64) -> f64 {
        self.dt_factor * eps * eps * (eps / self.eps[0]).powf(self.dt_exponent)
    }
}

/// Comparison at one snapshot time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub t: f64,
    /// Hausdorff distance between the longest zero-set polyline and the front.
    pub distance: f64,
    /// Largest distance from the zero set to the front.
    pub excursion: f64,
    pub profile_error: f64,
    pub energy: f64,
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsRecord {
    pub eps: f64,
    pub n_r: usize,
    pub n_phi: usize,
    pub dt: f64,
    pub steps: usize,
    /// `None` on success.
    pub failure: Option<String>,
    pub sup_distance: f64,
    pub sup_profile_error: f64,
    pub terminal_energy: f64,
    pub max_abs: f64,
    pub energy_monotone: bool,
    pub initial_robin_residual: f64,
    pub snapshots: Vec<SnapshotRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub surrogate: String,
    pub alpha: f64,
    pub horizon: f64,
    pub dt_factor: f64,
    pub dt_exponent: f64,
    pub cells_per_eps: f64,
    pub cells_exponent: f64,
    pub delta0: f64,
    pub front_bump: f64,
    pub mcf_segments: usize,
    pub mcf_dt: f64,
    pub mcf_collapsed_at: Option<f64>,
    pub runs: Vec<EpsRecord>,
    pub distance_fit: Option<RateFit>,
    pub profile_error_fit: Option<RateFit>,
    pub distance_monotone: bool,
    pub profile_error_monotone: bool,
    /// Zero set inside the tube of radius `2δ₀` around the front at every
    /// snapshot of the smallest `ε`.
    pub tube_contained: bool,
}

impl ConvergenceReport {
    pub fn successful(&self) -> impl Iterator<Item = &EpsRecord> {
        self.runs.iter().filter(|r| r.failure.is_none())
    }
}

/// Runs Allen–Cahn for every `ε` from well-prepared data around the
/// perturbed stationary chord, tracks the front with curvature flow, and
/// compares both at `SNAPSHOT_INTERVALS + 1` uniform times.
pub fn convergence_study(cfg: &StudyConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let front0 = mcf::unit_disk_chord(cfg.alpha, cfg.front.segments, cfg.front.bump)?;
    let profile = solve_optimal_profile(&cfg.potential, DEFAULT_HALF_LENGTH, DEFAULT_INTERVALS)?;
    let sigma = build_sigma_with(&cfg.potential, cfg.alpha, cfg.support_margin, cfg.bump_shape, DEFAULT_QUAD_TOL)?;

    let spacing = front0.length() / front0.segments() as f64;
    let mcf_steps = steps_for(cfg.horizon, cfg.mcf_dt_factor * spacing * spacing);
    let mcf_dt = cfg.horizon / mcf_steps as f64;
    let fronts = track_front(&front0, cfg.horizon, mcf_steps)?;

    let runs: Vec<EpsRecord> = cfg
        .eps
        .par_iter()
        .map(|&eps| {
            let grid = cfg.grid(eps);
            let mut record = EpsRecord {
                eps,
                n_r: grid.as_ref().map_or(0, |g| g.n_r()),
                n_phi: grid.as_ref().map_or(0, |g| g.n_phi()),
                dt: 0.0,
                steps: 0,
                failure: None,
                sup_distance: f64::NAN,
                sup_profile_error: f64::NAN,
                terminal_energy: f64::NAN,
                max_abs: f64::NAN,
                energy_monotone: false,
                initial_robin_residual: f64::NAN,
                snapshots: Vec::new(),
            };
            let outcome = grid.and_then(|g| {
                run_one(cfg, eps, Arc::new(g), &sigma, &profile, &fronts, &mut record)
            });
            if let Err(e) = outcome {
                record.failure = Some(e.to_string());
            }
            record
        })
        .collect();

    let ok: Vec<&EpsRecord> = runs.iter().filter(|r| r.failure.is_none()).collect();
    if ok.len() < 3 {
        let reasons: Vec<String> =
            runs.iter().filter_map(|r| r.failure.as_ref().map(|f| format!("ε = {}: {f}", r.eps))).collect();
        return Err(Error::Fit(format!("fewer than 3 successful runs ({})", reasons.join("; "))));
    }
    let eps: Vec<f64> = ok.iter().map(|r| r.eps).collect();
    let dist: Vec<f64> = ok.iter().map(|r| r.sup_distance).collect();
    let perr: Vec<f64> = ok.iter().map(|r| r.sup_profile_error).collect();
    let smallest = ok.last().unwrap();
    let tube_contained = smallest.snapshots.iter().all(|s| s.excursion <= 2.0 * cfg.delta0);

    Ok(ConvergenceReport {
        surrogate: "leading-order approximate solution".into(),
        alpha: cfg.alpha,
        horizon: cfg.horizon,
        dt_factor: cfg.dt_factor,
        dt_exponent: cfg.dt_exponent,
        cells_per_eps: cfg.cells_per_eps,
        cells_exponent: cfg.cells_exponent,
        delta0: cfg.delta0,
        front_bump: cfg.front.bump,
        mcf_segments: cfg.front.segments,
        mcf_dt,
        mcf_collapsed_at: None,
        distance_fit: fit_rate(&eps, &dist).ok(),
        profile_error_fit: fit_rate(&eps, &perr).ok(),
        distance_monotone: dist.windows(2).all(|w| w[1] < w[0]),
        profile_error_monotone: perr.windows(2).all(|w| w[1] <= w[0]),
        tube_contained,
        runs,
    })
}

/// Smallest multiple of `SNAPSHOT_INTERVALS` steps with step ≤ `dt`.
fn steps_for(horizon: f64, dt: f64) -> usize {
    let per = (horizon / (SNAPSHOT_INTERVALS as f64 * dt) - 1e-9).ceil().max(1.0) as usize;
    per * SNAPSHOT_INTERVALS
}

/// Front at each of the snapshot times.
fn track_front(front0: &FrontCurve, horizon: f64, steps: usize) -> Result<Vec<FrontCurve>> {
    let dt = horizon / steps as f64;
    let stride = steps / SNAPSHOT_INTERVALS;
    let mut out = vec![front0.clone()];
    let mut cur = front0.clone();
    for k in 1..=steps {
        cur = mcf::step_mcf(&cur, dt)?;
        cur.t = k as f64 * dt;
        if k % stride == 0 {
            out.push(cur.clone());
        }
    }
    Ok(out)
}

fn run_one(
    cfg: &StudyConfig,
    eps: f64,
    grid: Arc<PolarGrid>,
    sigma: &crate::potential::BoundaryEnergy,
    profile: &Profile,
    fronts: &[FrontCurve],
    record: &mut EpsRecord,
) -> Result<()> {
    let model = Arc::new(AcModel::new(cfg.potential.clone(), Some(sigma.clone()), eps)?);
    let u0 = well_prepared_initial(grid, model.clone(), &fronts[0], profile, cfg.delta0)?;
    record.initial_robin_residual = robin_residual(&u0);
    let steps = steps_for(cfg.horizon, cfg.ac_dt(eps));
    let dt = cfg.horizon / steps as f64;
    record.dt = dt;
    let stride = steps / SNAPSHOT_INTERVALS;
    let mut k = 0usize;
    let mut snapshots = Vec::with_capacity(SNAPSHOT_INTERVALS + 1);
    let traj = acsolver::run_ac_with(&u0, cfg.horizon, dt, usize::MAX, |u| {
        if k % stride == 0 {
            let front = &fronts[k / stride];
            let zero = extract_zero_set(u);
            let line = zero
                .longest()
                .ok_or_else(|| Error::Topology(format!("empty zero set at t = {}", u.t())))?;
            snapshots.push(SnapshotRecord {
                t: front.t,
                distance: hausdorff(line, &front.nodes)?,
                excursion: zero
                    .polylines
                    .iter()
                    .map(|p| directed_hausdorff(p, &front.nodes))
                    .try_fold(0.0f64, |m, d| d.map(|d| m.max(d)))?,
                profile_error: profile_error(u, front, profile, cfg.delta0)?,
                energy: acsolver::energy(u),
                components: zero.polylines.len(),
            });
        }
        k += 1;
        Ok(())
    })?;
    record.steps = traj.steps;
    record.max_abs = traj.max_abs;
    record.terminal_energy = traj.energy.last().map_or(f64::NAN, |e| e.1);
    record.energy_monotone = traj.energy.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-10 * w[0].1.abs());
    record.sup_distance = snapshots.iter().map(|s| s.distance).fold(0.0, f64::max);
    record.sup_profile_error = snapshots.iter().map(|s| s.profile_error).fold(0.0, f64::max);
    record.snapshots = snapshots;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::build_sigma;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn setup(eps: f64) -> (Arc<PolarGrid>, Arc<AcModel>, Profile) {
        let p = Potential::quartic();
        let b = build_sigma(&p, FRAC_PI_2, 0.1).unwrap();
        let prof = solve_optimal_profile(&p, 10.0, 4000).unwrap();
        let g = Arc::new(PolarGrid::for_eps(eps).unwrap());
        (g, Arc::new(AcModel::new(p, Some(b), eps).unwrap()), prof)
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.5), 1.0);
        assert_eq!(cutoff(-1.0), 1.0);
        assert_eq!(cutoff(2.0), 0.0);
        assert_eq!(cutoff(-3.0), 0.0);
        assert!((cutoff(1.5) - 0.5).abs() < 1e-15);
        let xs: Vec<f64> = (0..=100).map(|k| cutoff(1.0 + k as f64 / 100.0)).collect();
        assert!(xs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn linear_field_zero_set_is_the_vertical_diameter() {
        let (g, m, _) = setup(0.1);
        let u = Field2D::from_fn(g.clone(), m, |x| x.x).unwrap();
        let z = extract_zero_set(&u);
        assert_eq!(z.polylines.len(), 1);
        let diameter = [Vec2::new(0.0, -1.0), Vec2::new(0.0, 1.0)];
        assert!(hausdorff(z.longest().unwrap(), &diameter).unwrap() <= g.resolution());
    }

    #[test]
    fn constant_field_has_empty_zero_set() {
        let (g, m, _) = setup(0.1);
        let u = Field2D::constant(g, m, 1.0).unwrap();
        assert!(extract_zero_set(&u).is_empty());
    }

    #[test]
    fn profile_on_diameter_has_zero_set_on_diameter() {
        let eps = 0.05;
        let (g, m, prof) = setup(eps);
        let front = mcf::unit_disk_chord(FRAC_PI_2, 100, 0.0).unwrap();
        let u = well_prepared_initial(g.clone(), m, &front, &prof, 0.1).unwrap();
        let z = extract_zero_set(&u);
        assert!(hausdorff(z.longest().unwrap(), &front.nodes).unwrap() <= g.resolution());
    }

    #[test]
    fn well_prepared_values() {
        let eps = 0.05;
        let (g, m, prof) = setup(eps);
        let front = mcf::unit_disk_chord(1.2, 100, 0.05).unwrap();
        let u = well_prepared_initial(g, m, &front, &prof, 0.1).unwrap();
        assert!(u.max_abs() <= 1.0);
        for (x, v) in u.nodes() {
            let c = project_to_curve(&front, x, 0.2).unwrap();
            if c.r.abs() >= 0.2 {
                assert_eq!(v.abs(), 1.0);
            }
            if c.r == 0.0 {
                assert_eq!(v, 0.0);
            }
        }
        let one = Field2D::from_fn(u.grid().clone(), u.model().clone(), |_| 0.0).unwrap();
        let _ = one;
    }

    #[test]
    fn hausdorff_basic() {
        let a = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)];
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        let b: Vec<Vec2> = a.iter().map(|&p| p + Vec2::new(0.0, 0.3)).collect();
        assert!((hausdorff(&a, &b).unwrap() - 0.3).abs() < 1e-12);
        assert!(hausdorff(&a, &[]).is_err());
    }

    #[test]
    fn hausdorff_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut poly = |n: usize| (0..n).map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect::<Vec<_>>();
            let (a, b) = (poly(10), poly(10));
            let dense = |p: &[Vec2]| {
                p.windows(2)
                    .flat_map(|w| (0..=2000).map(move |k| w[0] + (w[1] - w[0]) * (k as f64 / 2000.0)))
                    .collect::<Vec<_>>()
            };
            let (da, db) = (dense(&a), dense(&b));
            let brute_dir = |x: &[Vec2], y: &[Vec2]| {
                x.iter().map(|&p| distance_to_polyline(p, y)).fold(0.0, f64::max)
            };
            let brute = brute_dir(&da, &b).max(brute_dir(&db, &a));
            let exact = hausdorff(&a, &b).unwrap();
            assert!(exact >= brute - 1e-12 && exact - brute < 2e-3, "{exact} {brute}");
        }
    }

    #[test]
    fn profile_error_of_prepared_data_vanishes() {
        let eps = 0.05;
        let (g, m, prof) = setup(eps);
        let front = mcf::unit_disk_chord(1.3, 100, 0.05).unwrap();
        let u = well_prepared_initial(g, m, &front, &prof, 0.1).unwrap();
        assert!(profile_error(&u, &front, &prof, 0.1).unwrap() <= 1e-10);
    }

    #[test]
    fn shifted_profile_error_matches_expansion() {
        let eps = 0.02;
        let a = 0.1;
        let (g, m, prof) = setup(eps);
        let front = mcf::unit_disk_chord(FRAC_PI_2, 100, 0.0).unwrap();
        let u = Field2D::from_fn(g, m, |x| prof.eval((x.y - eps * a) / eps)).unwrap();
        let err = profile_error(&u, &front, &prof, 0.1).unwrap();
        let expected = a * a * eps * prof.derivative_norm_sq() * 2.0;
        assert!((err * err / expected - 1.0).abs() < 0.05, "{} {expected}", err * err);
    }

    #[test]
    fn constant_field_profile_error_is_positive() {
        let eps = 0.05;
        let (g, m, prof) = setup(eps);
        let front = mcf::unit_disk_chord(FRAC_PI_2, 100, 0.0).unwrap();
        let u = Field2D::constant(g, m, 1.0).unwrap();
        assert!(profile_error(&u, &front, &prof, 0.1).unwrap() > 0.1);
    }

    #[test]
    fn exact_power_law_rate() {
        let e = 0.3;
        let fit = fit_rate(&[0.08, 0.04, 0.02], &[e, e / 2.0, e / 4.0]).unwrap();
        assert!((fit.rate - 1.0).abs() <= 1e-12);
        assert!(fit_rate(&[0.08, 0.04], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn study_rejects_bad_eps_lists() {
        let cfg = StudyConfig::new(FRAC_PI_2, vec![0.08, 0.04], 0.05);
        assert!(matches!(convergence_study(&cfg), Err(Error::Domain(_))));
        let cfg = StudyConfig::new(FRAC_PI_2, vec![0.08, 0.1, 0.04], 0.05);
        assert!(matches!(convergence_study(&cfg), Err(Error::Domain(_))));
    }
}
