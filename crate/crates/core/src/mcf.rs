//! Front tracking for curve-shortening flow `V = H` with endpoints sliding
//! on the domain boundary at a fixed contact angle.
//!
//! Each step solves the lumped-mass semi-implicit parametric scheme with
//! the endpoints frozen, then slides each endpoint along `∂Ω` until the
//! angle between `N_∂Ω` and the end-segment normal equals `α`, and finally
//! redistributes the nodes at equal arc length.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{resample_arclength, self_intersects, FrontCurve, SmoothDomain, Vec2};
use crate::linalg::TridiagonalLu;

pub const DEFAULT_SEGMENTS: usize = 200;
/// Default time step as a multiple of the squared node spacing.
pub const DEFAULT_DT_FACTOR: f64 = 0.25;

const ANGLE_TOL: f64 = 1e-6;
/// Spacing ratio above which the nodes are redistributed at equal arc
/// length. Redistributing at every step moves nodes onto chords each time
/// and biases the front inward by an amount that grows with the step count.
pub const REDISTRIBUTE_RATIO: f64 = 1.5;

/// Largest over smallest segment length.
pub fn spacing_ratio(nodes: &[Vec2]) -> f64 {
    let (lo, hi) = nodes
        .windows(2)
        .map(|w| w[0].dist(w[1]))
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), q| (lo.min(q), hi.max(q)));
    hi / lo
}

/// Curvature and unit normal at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeGeometry {
    /// `H = n · X_ss`; negative on a counterclockwise circle.
    pub curvature: f64,
    pub normal: Vec2,
}

/// Signed Menger curvature of the triple, `n · X_ss` under the −90° normal
/// convention. Zero for collinear or coincident points.
pub fn menger_curvature(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let denom = a.dist(b) * b.dist(c) * a.dist(c);
    let cross = (b - a).cross(c - b);
    if denom == 0.0 || cross == 0.0 {
        0.0
    } else {
        -2.0 * cross / denom
    }
}

pub fn curvature_and_normal(front: &FrontCurve) -> Result<Vec<NodeGeometry>> {
    let x = &front.nodes;
    let n = x.len();
    if n < 3 {
        return Err(Error::Precondition(format!("need at least 3 nodes, got {n}")));
    }
    Ok((0..n)
        .map(|i| {
            let (lo, hi) = if i == 0 { (0, 1) } else if i == n - 1 { (n - 2, n - 1) } else { (i - 1, i + 1) };
            let tangent = (x[hi] - x[lo]).normalized();
            let mid = i.clamp(1, n - 2);
            NodeGeometry {
                curvature: menger_curvature(x[mid - 1], x[mid], x[mid + 1]),
                normal: tangent.rot_cw(),
            }
        })
        .collect())
}

/// Boundary parameter of each endpoint.
pub fn endpoint_params(front: &FrontCurve) -> (f64, f64) {
    (front.domain.closest_param(front.start()), front.domain.closest_param(front.end()))
}

/// Tangent direction at `x0` of the quadratic through `x0, x1, x2`,
/// parametrised by chord length.
pub fn end_tangent(x0: Vec2, x1: Vec2, x2: Vec2) -> Vec2 {
    let h1 = x0.dist(x1);
    let h2 = x1.dist(x2);
    let (a, b, c) = (-(2.0 * h1 + h2) / (h1 * (h1 + h2)), (h1 + h2) / (h1 * h2), -h1 / (h2 * (h1 + h2)));
    (x0 * a + x1 * b + x2 * c).normalized()
}

/// Contact angles `∠(N_∂Ω, n)` at `p⁻` and `p⁺`, with `n` from the
/// second-order one-sided tangent at each end.
pub fn contact_angles(front: &FrontCurve) -> (f64, f64) {
    let dom = &front.domain;
    let (t0, t1) = endpoint_params(front);
    let x = &front.nodes;
    let m = x.len();
    let n0 = end_tangent(x[0], x[1], x[2]).rot_cw();
    let n1 = -end_tangent(x[m - 1], x[m - 2], x[m - 3]).rot_cw();
    (dom.normal(t0).dot(n0).clamp(-1.0, 1.0).acos(), dom.normal(t1).dot(n1).clamp(-1.0, 1.0).acos())
}

/// `Length − cos α · |W⁺|`, where `W⁺` is the boundary arc wetted by the
/// phase the normal points into (counterclockwise from `p⁻` to `p⁺`).
pub fn energy_probe(front: &FrontCurve) -> f64 {
    let (t0, t1) = endpoint_params(front);
    let cos = crate::potential::cos_snapped(front.alpha);
    front.length() - cos * front.domain.arc_length_ccw(t0, t1)
}

/// Largest time step for which the explicit variant would be stable; the
/// semi-implicit scheme is used with any step.
pub fn dt_max(front: &FrontCurve) -> f64 {
    let min = front.nodes.windows(2).map(|w| w[0].dist(w[1])).fold(f64::INFINITY, f64::min);
    0.4 * min * min
}

/// One step of the flow.
pub fn step_mcf(front: &FrontCurve, dt: f64) -> Result<FrontCurve> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Precondition(format!("time step must be positive, got {dt}")));
    }
    if !(front.alpha > 0.0 && front.alpha < std::f64::consts::PI) {
        return Err(Error::Domain(format!("contact angle {} outside (0, π)", front.alpha)));
    }
    let x = &front.nodes;
    let n = x.len();
    if n < 3 {
        return Err(Error::Precondition(format!("need at least 3 nodes, got {n}")));
    }
    let segments = n - 1;
    // the endpoints enter the interior system implicitly: iterate interior
    // solve and endpoint slide to a fixed point
    let system = ImplicitSystem::new(x, dt)?;
    let mut ends = (x[0], x[n - 1]);
    let mut next = front.clone();
    next.t = front.t + dt;
    let mut converged = false;
    for _ in 0..COUPLING_ITERS {
        next.nodes = system.solve(x, ends);
        enforce_angles(&mut next, front)?;
        let moved = next.nodes[0].dist(ends.0).max(next.nodes[n - 1].dist(ends.1));
        ends = (next.nodes[0], next.nodes[n - 1]);
        if moved <= COUPLING_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::AngleEnforcement(format!(
            "endpoint coupling did not settle within {COUPLING_ITERS} iterations at t = {}",
            next.t
        )));
    }
    if self_intersects(&next.nodes) {
        return Err(Error::Topology(format!("front intersects itself at t = {}", next.t)));
    }
    if spacing_ratio(&next.nodes) > REDISTRIBUTE_RATIO {
        next = resample_arclength(&next, segments)?;
        enforce_angles(&mut next, front)?;
    }
    let (a0, a1) = contact_angles(&next);
    let worst = (a0 - next.alpha).abs().max((a1 - next.alpha).abs());
    if worst > ANGLE_TOL {
        return Err(Error::AngleEnforcement(format!(
            "angle error {worst:e} rad after step at t = {}",
            next.t
        )));
    }
    Ok(next)
}

const COUPLING_ITERS: usize = 100;
const COUPLING_TOL: f64 = 1e-14;

/// Lumped-mass backward Euler for `X_t = X_ss` with prescribed endpoints.
struct ImplicitSystem {
    lu: TridiagonalLu,
    mass: Vec<f64>,
    first: f64,
    last: f64,
}

impl ImplicitSystem {
    fn new(x: &[Vec2], dt: f64) -> Result<Self> {
        let n = x.len();
        let q: Vec<f64> = x.windows(2).map(|w| w[0].dist(w[1])).collect();
        if q.iter().any(|&v| v == 0.0) {
            return Err(Error::Topology("coincident front nodes".into()));
        }
        let m = n - 2;
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut mass = vec![0.0; m];
        for k in 0..m {
            let i = k + 1;
            mass[k] = 0.5 * (q[i - 1] + q[i]) / dt;
            let (a, c) = (1.0 / q[i - 1], 1.0 / q[i]);
            lower[k] = -a;
            upper[k] = -c;
            diag[k] = mass[k] + a + c;
        }
        Ok(Self { lu: TridiagonalLu::new(&lower, &diag, &upper)?, mass, first: 1.0 / q[0], last: 1.0 / q[n - 2] })
    }

    fn solve(&self, x: &[Vec2], ends: (Vec2, Vec2)) -> Vec<Vec2> {
        let n = x.len();
        let m = n - 2;
        let mut bx: Vec<f64> = (0..m).map(|k| self.mass[k] * x[k + 1].x).collect();
        let mut by: Vec<f64> = (0..m).map(|k| self.mass[k] * x[k + 1].y).collect();
        bx[0] += self.first * ends.0.x;
        by[0] += self.first * ends.0.y;
        bx[m - 1] += self.last * ends.1.x;
        by[m - 1] += self.last * ends.1.y;
        self.lu.solve_in_place(&mut bx);
        self.lu.solve_in_place(&mut by);
        let mut out = Vec::with_capacity(n);
        out.push(ends.0);
        out.extend(bx.iter().zip(&by).map(|(&a, &b)| Vec2::new(a, b)));
        out.push(ends.1);
        out
    }
}

fn enforce_angles(front: &mut FrontCurve, previous: &FrontCurve) -> Result<()> {
    let dom = front.domain;
    let cos = crate::potential::cos_snapped(front.alpha);
    let m = front.nodes.len();
    let spacing = front.length() / (m - 1) as f64;
    let (p0, p1) = endpoint_params(previous);

    let (x1, x2) = (front.nodes[1], front.nodes[2]);
    let start = move |t: f64| dom.normal(t).dot(end_tangent(dom.point(t), x1, x2).rot_cw()) - cos;
    let t0 = slide(start, p0, spacing, &dom).map_err(|e| angle_error("start", front.t, e))?;
    let (y1, y2) = (front.nodes[m - 2], front.nodes[m - 3]);
    let end = move |t: f64| -dom.normal(t).dot(end_tangent(dom.point(t), y1, y2).rot_cw()) - cos;
    let t1 = slide(end, p1, spacing, &dom).map_err(|e| angle_error("end", front.t, e))?;
    front.nodes[0] = dom.point(t0);
    front.nodes[m - 1] = dom.point(t1);
    Ok(())
}

fn angle_error(which: &str, t: f64, detail: String) -> Error {
    Error::AngleEnforcement(format!("{which} point at t = {t}: {detail}"))
}

/// Root of `g` on the boundary parameter closest to `t0`, searched in
/// symmetric brackets that grow from a fraction of the node spacing.
fn slide<G: Fn(f64) -> f64>(g: G, t0: f64, spacing: f64, dom: &SmoothDomain) -> std::result::Result<f64, String> {
    let g0 = g(t0);
    if g0 == 0.0 {
        return Ok(t0);
    }
    let speed = dom.velocity(t0).norm();
    let mut delta = 0.05 * spacing / speed;
    let limit = 0.5;
    while delta <= limit {
        for (a, b) in [(t0 - delta, t0), (t0, t0 + delta)] {
            let (ga, gb) = (g(a), g(b));
            if ga.is_finite() && gb.is_finite() && ga * gb <= 0.0 {
                return Ok(bisect(&g, a, b, ga));
            }
        }
        delta *= 2.0;
    }
    Err(format!("no sign change of the angle condition within {limit} of t = {t0} (residual {g0:e})"))
}

fn bisect<G: Fn(f64) -> f64>(g: &G, mut a: f64, mut b: f64, mut ga: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a.min(b) || mid >= a.max(b) {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if ga * gm < 0.0 {
            b = mid;
        } else {
            a = mid;
            ga = gm;
        }
    }
    0.5 * (a + b)
}

/// Snapshots of a run; `collapsed_at` is set when the front shrank below
/// five initial node spacings and the run stopped early.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McfTrajectory {
    pub snapshots: Vec<FrontCurve>,
    pub collapsed_at: Option<f64>,
    pub steps: usize,
}

/// Steps from `front.t` to `front.t + duration`, keeping every `stride`-th
/// state and the final one. The step is shrunk so that it divides the
/// duration exactly.
pub fn run_mcf(front: &FrontCurve, duration: f64, dt: f64, stride: usize) -> Result<McfTrajectory> {
    if !(duration >= 0.0) {
        return Err(Error::Precondition(format!("duration must be non-negative, got {duration}")));
    }
    if duration == 0.0 {
        return Ok(McfTrajectory { snapshots: vec![front.clone()], collapsed_at: None, steps: 0 });
    }
    if !(dt > 0.0) || stride == 0 {
        return Err(Error::Precondition("time step and stride must be positive".into()));
    }
    let steps = (duration / dt - 1e-9).ceil().max(1.0) as usize;
    let dt = duration / steps as f64;
    let min_length = 5.0 * front.length() / front.segments() as f64;
    let t_start = front.t;
    let mut snapshots = vec![front.clone()];
    let mut cur = front.clone();
    for k in 1..=steps {
        let mut next = step_mcf(&cur, dt).map_err(|e| match e {
            Error::AngleEnforcement(m) => Error::AngleEnforcement(format!("{m} (step {k})")),
            other => other,
        })?;
        next.t = t_start + k as f64 * dt;
        if next.length() < min_length {
            snapshots.push(next.clone());
            return Ok(McfTrajectory { snapshots, collapsed_at: Some(next.t), steps: k });
        }
        if k % stride == 0 || k == steps {
            snapshots.push(next.clone());
        }
        cur = next;
    }
    Ok(McfTrajectory { snapshots, collapsed_at: None, steps })
}

/// Straight chord of the unit disk meeting the boundary at angle `α`, with
/// its normal pointing into the cap it cuts off for `α < π/2`, optionally
/// displaced along the normal by `bump·sin²(π(s+1)/2)`. The bump vanishes to
/// second order at the ends, so the contact angle is unchanged.
pub fn unit_disk_chord(alpha: f64, segments: usize, bump: f64) -> Result<FrontCurve> {
    if !(alpha > 0.0 && alpha < std::f64::consts::PI) {
        return Err(Error::Domain(format!("contact angle {alpha} outside (0, π)")));
    }
    if segments < 2 {
        return Err(Error::Precondition("need at least 2 segments".into()));
    }
    let d = crate::potential::cos_snapped(alpha);
    let half = (1.0 - d * d).sqrt();
    let nodes = (0..=segments)
        .map(|i| {
            let s = -1.0 + 2.0 * i as f64 / segments as f64;
            let b = bump * (std::f64::consts::FRAC_PI_2 * (s + 1.0)).sin().powi(2);
            // τ = (−1, 0), n = (0, 1)
            Vec2::new(-half * s, d + b)
        })
        .collect::<Vec<_>>();
    let mut front = FrontCurve::new(nodes, alpha, SmoothDomain::UnitCircle);
    let last = front.nodes.len() - 1;
    front.nodes[0] = Vec2::new(half, d);
    front.nodes[last] = Vec2::new(-half, d);
    Ok(front)
}
