//! The optimal profile `θ₀` (the heteroclinic orbit of `−w″ + f′(w) = 0`
//! with `w(0) = 0`) and the linearized profile equation
//! `−w″ + f″(θ₀) w = A`.
//!
//! The profile is obtained by inverting `z(u) = ∫₀ᵘ dv / √(2(f(v) − f(−1)))`
//! node by node, which avoids shooting entirely.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{fit_line, TridiagonalLu};
use crate::potential::Potential;
use crate::quadrature;

pub const DEFAULT_HALF_LENGTH: f64 = 10.0;
pub const DEFAULT_INTERVALS: usize = 4000;

const NEWTON_ITERS: usize = 40;

/// Exponential fit `gap ≈ C e^{−β|z|}` on one tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub beta: f64,
    pub c: f64,
    /// RMS residual of the fit in log space.
    pub log_residual: f64,
    pub samples: usize,
}

/// Least-squares fit of `log|gap|` against `|z|`.
///
/// Samples whose gap has reached rounding level are dropped first.
pub fn fit_decay(z: &[f64], gap: &[f64]) -> Result<DecayFit> {
    const FLOOR: f64 = 1e3 * f64::EPSILON;
    if z.len() != gap.len() {
        return Err(Error::Fit("sample arrays differ in length".into()));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = z
        .iter()
        .zip(gap)
        .filter(|(_, g)| g.abs() > FLOOR && g.is_finite())
        .map(|(z, g)| (z.abs(), g.abs().ln()))
        .unzip();
    if x.len() < 20 {
        return Err(Error::Fit(format!(
            "tail saturated: {} of {} samples above rounding level, need 20",
            x.len(),
            z.len()
        )));
    }
    let fit = fit_line(&x, &y)?;
    let beta = -fit.slope;
    if !(beta > 0.0) {
        return Err(Error::Fit(format!("tail does not decay (fitted rate {beta})")));
    }
    Ok(DecayFit { beta, c: fit.intercept.exp(), log_residual: fit.rms_residual, samples: x.len() })
}

/// Sampled optimal profile on a uniform symmetric grid.
#[derive(Debug, Clone)]
pub struct Profile {
    potential: Potential,
    half_length: f64,
    h: f64,
    z: Vec<f64>,
    theta: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    decay_left: DecayFit,
    decay_right: DecayFit,
}

/// Solves for `θ₀` on `[−L, L]` with `N` intervals (`N` even so that `z = 0`
/// is a node).
pub fn solve_optimal_profile(p: &Potential, half_length: f64, intervals: usize) -> Result<Profile> {
    if !(half_length >= 5.0) {
        return Err(Error::Precondition(format!("half-length must be at least 5, got {half_length}")));
    }
    if intervals < 200 || intervals % 2 != 0 {
        return Err(Error::Precondition(format!(
            "interval count must be even and at least 200, got {intervals}"
        )));
    }
    let mid = intervals / 2;
    let h = half_length / mid as f64;
    let z: Vec<f64> = (0..=intervals).map(|i| (i as f64 - mid as f64) * h).collect();

    let mut theta = vec![0.0; intervals + 1];
    let right = march(p, h, mid, 1.0)?;
    let left = march(p, h, mid, -1.0)?;
    for k in 1..=mid {
        theta[mid + k] = right[k];
        theta[mid - k] = left[k];
    }
    let d1 = theta.iter().map(|&u| p.profile_speed(u)).collect::<Result<Vec<_>>>()?;
    let d2: Vec<f64> = theta.iter().map(|&u| p.df(u)).collect();

    let start = mid + mid / 2;
    let decay_right = fit_decay(&z[start..], &theta[start..].iter().map(|t| 1.0 - t).collect::<Vec<_>>())?;
    let decay_left = fit_decay(
        &z[..=mid - mid / 2],
        &theta[..=mid - mid / 2].iter().map(|t| t + 1.0).collect::<Vec<_>>(),
    )?;
    Ok(Profile { potential: p.clone(), half_length, h, z, theta, d1, d2, decay_left, decay_right })
}

/// Values `θ₀(k·h)` for `k = 0..=n` along the branch heading to `well`.
fn march(p: &Potential, h: f64, n: usize, well: f64) -> Result<Vec<f64>> {
    let rate = p.d2f(well).max(0.0).sqrt();
    let step = well * h;
    let inv_speed = |v: f64| -> f64 {
        match p.profile_speed(v) {
            Ok(s) if s > 0.0 => 1.0 / s,
            _ => f64::INFINITY,
        }
    };
    let mut out = vec![0.0; n + 1];
    let mut saturated = false;
    for k in 1..=n {
        let prev = out[k - 1];
        if !saturated {
            let speed = p.profile_speed(prev)?;
            if speed <= 0.0 {
                if prev.abs() < 1.0 - 1e-6 {
                    return Err(Error::InvalidPotential(format!(
                        "f(u) = f(-1) at u = {prev}, strictly inside the wells"
                    )));
                }
                saturated = true;
            } else {
                match newton_segment(&inv_speed, prev, step, speed, well) {
                    Some(u) => {
                        out[k] = u;
                        continue;
                    }
                    None if (well - prev).abs() < 1e-4 => saturated = true,
                    None => {
                        return Err(Error::InvalidPotential(format!(
                            "profile inversion stalled at u = {prev}"
                        )))
                    }
                }
            }
        }
        // Past the resolution of the quadrature inversion the branch follows
        // its linearized tail.
        out[k] = well - (well - prev) * (-rate * h).exp();
    }
    Ok(out)
}

/// Finds `u` with `∫_{prev}^{u} dv/F(v) = step`, using Newton steps safeguarded
/// to stay strictly between `prev` and the well.
fn newton_segment<G: Fn(f64) -> f64>(inv_speed: &G, prev: f64, step: f64, speed: f64, well: f64) -> Option<f64> {
    let mut lo = prev;
    let mut hi = well;
    let mut u = prev + step * speed;
    if (u - prev) * well <= 0.0 || (well - u) * well <= 0.0 {
        u = 0.5 * (prev + well);
    }
    for _ in 0..NEWTON_ITERS {
        let g = match quadrature::kronrod15(inv_speed, prev, u) {
            Ok((v, _)) => v - step,
            Err(_) => return None,
        };
        if g.abs() <= 2.0 * f64::EPSILON * step.abs() {
            return Some(u);
        }
        if g * well > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let slope = inv_speed(u);
        let mut next = u - g / slope;
        if next.is_finite() && (next - u).abs() <= 8.0 * f64::EPSILON * u.abs().max(0.1) {
            return Some(next);
        }
        if !next.is_finite() || (next - lo) * well <= 0.0 || (hi - next) * well <= 0.0 {
            next = 0.5 * (lo + hi);
        }
        u = next;
    }
    None
}

impl Profile {
    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Index of the node `z = 0`.
    pub fn center(&self) -> usize {
        self.z.len() / 2
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_d1(&self) -> &[f64] {
        &self.d1
    }

    pub fn theta_d2(&self) -> &[f64] {
        &self.d2
    }

    pub fn decay_left(&self) -> DecayFit {
        self.decay_left
    }

    pub fn decay_right(&self) -> DecayFit {
        self.decay_right
    }

    /// `θ₀(z)` by cubic Hermite interpolation, continued by the linearized
    /// exponential tail beyond `±L`.
    pub fn eval(&self, z: f64) -> f64 {
        self.eval_with_derivative(z).0
    }

    pub fn eval_d1(&self, z: f64) -> f64 {
        self.eval_with_derivative(z).1
    }

    pub fn eval_with_derivative(&self, z: f64) -> (f64, f64) {
        let n = self.z.len() - 1;
        if z >= self.half_length || z <= -self.half_length {
            let (well, i) = if z > 0.0 { (1.0, n) } else { (-1.0, 0) };
            let rate = self.potential.d2f(well).max(0.0).sqrt();
            let gap = (well - self.theta[i]) * (-rate * (z.abs() - self.half_length)).exp();
            return (well - gap, rate * gap.abs());
        }
        let x = (z + self.half_length) / self.h;
        let i = (x.floor() as usize).min(n - 1);
        let t = x - i as f64;
        let (y0, y1) = (self.theta[i], self.theta[i + 1]);
        let (m0, m1) = (self.d1[i] * self.h, self.d1[i + 1] * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        let slope = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / self.h;
        (value, slope)
    }

    /// `∫ (θ₀′)² dz` by the trapezoid rule, spectrally accurate for the
    /// exponentially decaying integrand.
    pub fn derivative_norm_sq(&self) -> f64 {
        let sq: Vec<f64> = self.d1.iter().map(|v| v * v).collect();
        quadrature::trapezoid(&sq, self.h)
    }

    /// Largest `|θ₀″ − f′(θ₀)|` over nodes at least three cells from the ends,
    /// with `θ₀″` from a sixth-order seven-point difference of the samples.
    pub fn ode_residual(&self) -> f64 {
        const W: [f64; 4] = [-49.0 / 18.0, 1.5, -0.15, 1.0 / 90.0];
        let h2 = self.h * self.h;
        let th = &self.theta;
        (3..th.len() - 3)
            .map(|i| {
                let mut dd = W[0] * th[i];
                for k in 1..4 {
                    dd += W[k] * (th[i - k] + th[i + k]);
                }
                (dd / h2 - self.potential.df(th[i])).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest `|θ₀′ − √(2(f(θ₀) − f(−1)))|` with `θ₀′` from a sixth-order
    /// centered difference.
    pub fn first_integral_residual(&self) -> f64 {
        const W: [f64; 3] = [0.75, -0.15, 1.0 / 60.0];
        let th = &self.theta;
        (3..th.len() - 3)
            .map(|i| {
                let mut d = 0.0;
                for k in 1..4 {
                    d += W[k - 1] * (th[i + k] - th[i - k]);
                }
                (d / self.h - self.d1[i]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Result of [`solve_linearized_ode`] when the data is compatible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearizedSolution {
    pub w: Vec<f64>,
    /// `∫Aθ₀′ / ‖θ₀′‖²`, the multiple of `θ₀′` removed from `A` before solving.
    pub projection: f64,
    /// Multiple of `θ₀′` the discrete solution absorbs to satisfy `w(0) = 0`.
    pub kernel_multiplier: f64,
    /// Largest residual of the discrete equation against the projected data.
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LinearizedOutcome {
    Solved(LinearizedSolution),
    /// `∫Aθ₀′` exceeded the compatibility tolerance.
    Rejected { integral: f64, tolerance: f64 },
}

impl LinearizedOutcome {
    pub fn solution(&self) -> Option<&LinearizedSolution> {
        match self {
            LinearizedOutcome::Solved(s) => Some(s),
            LinearizedOutcome::Rejected { .. } => None,
        }
    }
}

/// Solves `−w″ + f″(θ₀) w = A`, `w(0) = 0`, on the profile grid.
///
/// Rejects data that is not orthogonal to `θ₀′`. Otherwise removes the
/// `θ₀′` component of `A` and solves with Robin closures
/// `w′(±L) = ∓√f″(±1) w(±L)`.
pub fn solve_linearized_ode(prof: &Profile, a: &[f64]) -> Result<LinearizedOutcome> {
    let n = prof.len();
    if a.len() != n {
        return Err(Error::Precondition(format!("data has {} samples, grid has {n}", a.len())));
    }
    if let Some(i) = a.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "linearized data", at: prof.z[i] });
    }
    let amax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if a[0].abs() > 1e-6 * amax || a[n - 1].abs() > 1e-6 * amax {
        return Err(Error::Precondition("data does not decay at the grid ends".into()));
    }
    let h = prof.h;
    let tp = &prof.d1;
    let prod: Vec<f64> = a.iter().zip(tp).map(|(x, y)| x * y).collect();
    let integral = quadrature::trapezoid(&prod, h);
    let a_norm = quadrature::trapezoid(&a.iter().map(|v| v * v).collect::<Vec<_>>(), h).sqrt();
    let tp_norm_sq = prof.derivative_norm_sq();
    let tolerance = 1e-8 * a_norm * tp_norm_sq.sqrt();
    if integral.abs() > tolerance {
        return Ok(LinearizedOutcome::Rejected { integral, tolerance });
    }
    let projection = integral / tp_norm_sq;
    let rhs: Vec<f64> = a.iter().zip(tp).map(|(x, y)| x - projection * y).collect();

    let c = prof.center();
    let pot = &prof.potential;
    let coef: Vec<f64> = prof.theta.iter().map(|&t| pot.d2f(t)).collect();
    let w_a = solve_halves(prof, &coef, &rhs)?;
    let w_t = solve_halves(prof, &coef, tp)?;
    let h2 = h * h;
    let row0 = |w: &[f64]| -(w[c - 1] + w[c + 1]) / h2;
    let denom = row0(&w_t) - tp[c];
    if denom == 0.0 {
        return Err(Error::LinearSolver("kernel border is singular".into()));
    }
    let mu = (rhs[c] - row0(&w_a)) / denom;
    let w: Vec<f64> = w_a.iter().zip(&w_t).map(|(x, y)| x + mu * y).collect();

    let residual = discrete_operator(prof, &coef, &w)
        .iter()
        .zip(&rhs)
        .map(|(l, r)| (l - r).abs())
        .fold(0.0, f64::max);
    Ok(LinearizedOutcome::Solved(LinearizedSolution { w, projection, kernel_multiplier: mu, residual }))
}

/// Solves the two half-line problems with `w(0) = 0` and the Robin closure
/// at the far end.
fn solve_halves(prof: &Profile, coef: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = prof.len();
    let c = prof.center();
    let h = prof.h;
    let h2 = h * h;
    let mut w = vec![0.0; n];
    for (dir, well) in [(1isize, 1.0), (-1isize, -1.0)] {
        let rate = prof.potential.d2f(well).max(0.0).sqrt();
        let m = c;
        let idx = |k: usize| (c as isize + dir * k as isize) as usize;
        let mut lower = vec![-1.0 / h2; m];
        let mut upper = vec![-1.0 / h2; m];
        let mut diag = vec![0.0; m];
        let mut b = vec![0.0; m];
        for k in 1..=m {
            let j = idx(k);
            diag[k - 1] = 2.0 / h2 + coef[j];
            b[k - 1] = rhs[j];
        }
        diag[m - 1] += 2.0 * rate / h;
        lower[m - 1] = -2.0 / h2;
        upper[m - 1] = 0.0;
        let lu = TridiagonalLu::new(&lower, &diag, &upper)?;
        lu.solve_in_place(&mut b);
        for k in 1..=m {
            w[idx(k)] = b[k - 1];
        }
    }
    Ok(w)
}

fn discrete_operator(prof: &Profile, coef: &[f64], w: &[f64]) -> Vec<f64> {
    let n = w.len();
    let h = prof.h;
    let h2 = h * h;
    let pot = &prof.potential;
    let (rl, rr) = (pot.d2f(-1.0).max(0.0).sqrt(), pot.d2f(1.0).max(0.0).sqrt());
    (0..n)
        .map(|i| {
            let (left, right) = if i == 0 {
                (w[1] - 2.0 * h * rl * w[0], w[1])
            } else if i == n - 1 {
                (w[n - 2], w[n - 2] - 2.0 * h * rr * w[n - 1])
            } else {
                (w[i - 1], w[i + 1])
            };
            (2.0 * w[i] - left - right) / h2 + coef[i] * w[i]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quartic_profile(l: f64, n: usize) -> Profile {
        solve_optimal_profile(&Potential::quartic(), l, n).unwrap()
    }

    #[test]
    fn quartic_profile_is_tanh() {
        let prof = quartic_profile(8.0, 2000);
        let err = prof.z().iter().zip(prof.theta()).map(|(z, t)| (t - z.tanh()).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-8, "sup error {err:e}");
        assert_eq!(prof.theta()[prof.center()], 0.0);
        assert!((prof.theta_d1()[prof.center()] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn residuals_are_small() {
        let prof = quartic_profile(8.0, 2000);
        assert!(prof.ode_residual() <= 1e-8, "{:e}", prof.ode_residual());
        assert!(prof.first_integral_residual() <= 1e-8);
    }

    #[test]
    fn strictly_increasing() {
        let prof = quartic_profile(10.0, 4000);
        assert!(prof.theta().windows(2).all(|w| w[1] > w[0]));
        assert!(prof.theta_d1()[1..prof.len() - 1].iter().all(|&d| d > 0.0));
    }

    #[test]
    fn derivative_norm_matches_surface_constant() {
        let prof = quartic_profile(10.0, 4000);
        assert!((prof.derivative_norm_sq() - 4.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn decay_rate_near_two() {
        let prof = quartic_profile(10.0, 4000);
        for fit in [prof.decay_left(), prof.decay_right()] {
            assert!(fit.beta > 1.9 && fit.beta <= 2.0 + 1e-6, "{fit:?}");
        }
    }

    #[test]
    fn synthetic_decay_fit() {
        let z: Vec<f64> = (0..50).map(|i| 1.0 + 0.1 * i as f64).collect();
        let g: Vec<f64> = z.iter().map(|z| 2.0 * (-2.0 * z).exp()).collect();
        let fit = fit_decay(&z, &g).unwrap();
        assert!((fit.beta - 2.0).abs() < 1e-6);
        assert!((fit.c - 2.0).abs() < 1e-6);
    }

    #[test]
    fn constant_tail_is_a_fit_error() {
        let z: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert!(matches!(fit_decay(&z, &[0.5; 50]), Err(Error::Fit(_))));
        assert!(matches!(fit_decay(&z, &[0.0; 50]), Err(Error::Fit(_))));
    }

    #[test]
    fn interpolation_matches_tanh() {
        let prof = quartic_profile(10.0, 4000);
        for k in 0..200 {
            let z = -12.0 + 0.1234 * k as f64;
            let (v, d) = prof.eval_with_derivative(z);
            assert!((v - z.tanh()).abs() < 1e-9, "z = {z}");
            assert!((d - 1.0 / z.cosh().powi(2)).abs() < 1e-7, "z = {z}");
        }
    }

    #[test]
    fn odd_and_even_symmetry() {
        let prof = quartic_profile(10.0, 4000);
        let n = prof.len() - 1;
        for i in 0..=n {
            assert!((prof.theta()[i] + prof.theta()[n - i]).abs() <= 1e-10);
            assert!((prof.theta_d1()[i] - prof.theta_d1()[n - i]).abs() <= 1e-10);
        }
    }

    #[test]
    fn derivative_spans_the_kernel() {
        let prof = quartic_profile(10.0, 4000);
        let h = prof.spacing();
        let d = prof.theta_d1();
        let worst = (1..prof.len() - 1)
            .map(|i| {
                let lap = (d[i - 1] - 2.0 * d[i] + d[i + 1]) / (h * h);
                (-lap + Potential::quartic().d2f(prof.theta()[i]) * d[i]).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 50.0 * h * h, "{worst:e}");
    }

    #[test]
    fn invalid_parameters_rejected() {
        let p = Potential::quartic();
        assert!(matches!(solve_optimal_profile(&p, 4.0, 400), Err(Error::Precondition(_))));
        assert!(matches!(solve_optimal_profile(&p, 8.0, 100), Err(Error::Precondition(_))));
        assert!(matches!(solve_optimal_profile(&p, 8.0, 401), Err(Error::Precondition(_))));
    }

    #[test]
    fn inner_zero_of_the_radicand_is_invalid() {
        // f(u) = ½u²(1 − u²)² also vanishes at u = 0
        let p = Potential::polynomial(vec![0.0, 0.0, 0.5, 0.0, -1.0, 0.0, 0.5], 1.0);
        assert!(matches!(solve_optimal_profile(&p, 8.0, 400), Err(Error::InvalidPotential(_))));
    }

    #[test]
    fn scaled_quartic_profile() {
        // f = k/2 (1−u²)²  gives θ₀(z) = tanh(√k z)
        let p = Potential::scaled_quartic(0.25);
        let prof = solve_optimal_profile(&p, 16.0, 4000).unwrap();
        let err = prof.z().iter().zip(prof.theta()).map(|(z, t)| (t - (0.5 * z).tanh()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err:e}");
    }

    #[test]
    fn zero_data_gives_zero() {
        let prof = quartic_profile(10.0, 1000);
        let out = solve_linearized_ode(&prof, &vec![0.0; prof.len()]).unwrap();
        let sol = out.solution().unwrap();
        assert!(sol.w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn closed_form_pair() {
        let prof = quartic_profile(10.0, 4000);
        let a: Vec<f64> = prof.theta_d2().iter().map(|v| -2.0 * v).collect();
        let out = solve_linearized_ode(&prof, &a).unwrap();
        let sol = out.solution().expect("compatible data");
        let err = prof
            .z()
            .iter()
            .zip(prof.theta_d1())
            .zip(&sol.w)
            .map(|((z, d), w)| (w - z * d).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-4, "{err:e}");
        assert_eq!(sol.w[prof.center()], 0.0);
    }

    #[test]
    fn derivative_data_is_rejected() {
        let prof = quartic_profile(10.0, 4000);
        match solve_linearized_ode(&prof, prof.theta_d1()).unwrap() {
            LinearizedOutcome::Rejected { integral, .. } => assert!((integral - 4.0 / 3.0).abs() < 1e-6),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn non_decaying_data_is_a_precondition_error() {
        let prof = quartic_profile(10.0, 1000);
        let a = vec![1.0; prof.len()];
        assert!(matches!(solve_linearized_ode(&prof, &a), Err(Error::Precondition(_))));
    }

    #[test]
    fn solution_decays_like_the_profile() {
        let prof = quartic_profile(10.0, 4000);
        let a: Vec<f64> = prof.z().iter().map(|z| z * (-z * z).exp()).collect();
        let out = solve_linearized_ode(&prof, &a).unwrap();
        let w = &out.solution().unwrap().w;
        let start = prof.center() + prof.center() / 2;
        let fit = fit_decay(&prof.z()[start..], &w[start..]).unwrap();
        assert!(fit.beta >= prof.potential().decay_bound() - 0.1, "{fit:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn odd_data_is_always_compatible(amp in -3.0f64..3.0, width in 0.5f64..2.0) {
            let prof = quartic_profile(10.0, 1000);
            let a: Vec<f64> = prof.z().iter().map(|z| amp * z * (-(z / width).powi(2)).exp()).collect();
            let out = solve_linearized_ode(&prof, &a).unwrap();
            prop_assert!(out.solution().is_some());
            prop_assert_eq!(out.solution().unwrap().w[prof.center()], 0.0);
        }

        #[test]
        fn eval_stays_in_wells(z in -30.0f64..30.0) {
            let prof = quartic_profile(8.0, 400);
            let v = prof.eval(z);
            prop_assert!(v.abs() <= 1.0);
            prop_assert!(prof.eval_d1(z) >= 0.0);
        }
    }
}
