//! Double-well potentials, the boundary contact energy and the
//! compatibility condition that ties the energy jump to the contact angle.
//!
//! The boundary energy is `σ_α = cos α · σ̂`, where `σ̂′` is a smooth bump
//! supported strictly inside `(−1, 1)` and scaled so that
//! `σ̂(−1) − σ̂(1) = c_f`, the surface constant of the potential. With that
//! normalisation `cos α = (σ_α(−1) − σ_α(1)) / c_f` holds by construction.

use std::cell::RefCell;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// Evaluator for a user-supplied potential: `(u, k)` returns the `k`-th
/// derivative `f^{(k)}(u)` for `k ∈ 0..=3`.
pub type DerivativeFn = dyn Fn(f64, usize) -> f64 + Send + Sync;

#[derive(Clone)]
enum Kind {
    /// Coefficients in increasing degree.
    Polynomial(Vec<f64>),
    Custom(Arc<DerivativeFn>),
}

/// A double-well potential `f` with wells at `±1`.
#[derive(Clone)]
pub struct Potential {
    name: String,
    kind: Kind,
    sign_radius: f64,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("name", &self.name)
            .field("sign_radius", &self.sign_radius)
            .finish()
    }
}

impl Potential {
    /// `f(u) = ½(1 − u²)²`, with optimal profile `tanh`.
    pub fn quartic() -> Self {
        Self::scaled_quartic(1.0)
    }

    /// `f(u) = k · ½(1 − u²)²`.
    pub fn scaled_quartic(k: f64) -> Self {
        let mut p = Self::polynomial(vec![0.5 * k, 0.0, -k, 0.0, 0.5 * k], 1.0);
        p.name = if k == 1.0 { "quartic".into() } else { format!("quartic*{k}") };
        p
    }

    /// Polynomial potential with coefficients in increasing degree.
    pub fn polynomial(coefficients: Vec<f64>, sign_radius: f64) -> Self {
        Self { name: "polynomial".into(), kind: Kind::Polynomial(coefficients), sign_radius }
    }

    /// Arbitrary smooth potential given through its first three derivatives.
    pub fn custom(name: impl Into<String>, eval: Arc<DerivativeFn>, sign_radius: f64) -> Self {
        Self { name: name.into(), kind: Kind::Custom(eval), sign_radius }
    }

    pub fn with_sign_radius(mut self, r0: f64) -> Self {
        self.sign_radius = r0;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Radius `R₀ ≥ 1` beyond which `u f′(u) ≥ 0`.
    pub fn sign_radius(&self) -> f64 {
        self.sign_radius
    }

    pub fn derivative(&self, u: f64, order: usize) -> f64 {
        match &self.kind {
            Kind::Polynomial(c) => poly_derivative(c, u, order),
            Kind::Custom(eval) => eval(u, order),
        }
    }

    pub fn f(&self, u: f64) -> f64 {
        self.derivative(u, 0)
    }

    pub fn df(&self, u: f64) -> f64 {
        self.derivative(u, 1)
    }

    pub fn d2f(&self, u: f64) -> f64 {
        self.derivative(u, 2)
    }

    pub fn d3f(&self, u: f64) -> f64 {
        self.derivative(u, 3)
    }

    /// `√min{f″(−1), f″(1)}`, the decay rate bound for the optimal profile.
    pub fn decay_bound(&self) -> f64 {
        self.d2f(-1.0).min(self.d2f(1.0)).max(0.0).sqrt()
    }

    /// `√(2(f(u) − f(−1)))`, clamped at rounding slack.
    pub(crate) fn profile_speed(&self, u: f64) -> Result<f64> {
        let rad = 2.0 * self.excess(u);
        if !rad.is_finite() {
            return Err(Error::NonFinite { what: "potential", at: u });
        }
        if rad < -RADICAND_SLACK {
            return Err(Error::InvalidPotential(format!(
                "f(u) < f(-1) at u = {u} (radicand {rad:e})"
            )));
        }
        Ok(rad.max(0.0).sqrt())
    }

    /// `f(u) − f(−1)`. Close to a well the direct difference loses all
    /// significant digits, so a third-order Taylor expansion is used there.
    fn excess(&self, u: f64) -> f64 {
        for well in [-1.0, 1.0] {
            let d = u - well;
            if d.abs() < TAYLOR_RADIUS {
                let base = if well > 0.0 { self.f(1.0) - self.f(-1.0) } else { 0.0 };
                return base + d * d * (0.5 * self.d2f(well) + d * self.d3f(well) / 6.0);
            }
        }
        self.f(u) - self.f(-1.0)
    }
}

const RADICAND_SLACK: f64 = 1e-12;
const TAYLOR_RADIUS: f64 = 5e-4;

fn poly_derivative(c: &[f64], u: f64, order: usize) -> f64 {
    let mut s = 0.0;
    for deg in (order..c.len()).rev() {
        let falling: f64 = (0..order).map(|j| (deg - j) as f64).product();
        s = s * u + c[deg] * falling;
    }
    s
}

/// Outcome of [`validate_potential`], one flag per structural condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub wells_are_critical: bool,
    pub wells_are_strict_minima: bool,
    pub equal_depth: bool,
    pub above_wells_inside: bool,
    pub sign_condition: bool,
    /// Largest violation magnitude over all conditions (0 when everything holds).
    pub worst_violation: f64,
    /// Name of the condition with the largest violation.
    pub worst_condition: Option<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.wells_are_critical
            && self.wells_are_strict_minima
            && self.equal_depth
            && self.above_wells_inside
            && self.sign_condition
    }
}

const WELL_TOL: f64 = 1e-12;

/// Samples the potential on `[−R₀−2, R₀+2]` and checks the double-well
/// conditions: critical and strictly convex wells of equal depth, `f > f(1)`
/// between them, and `u f′(u) ≥ 0` for `|u| ≥ R₀`.
pub fn validate_potential(p: &Potential, n_samples: usize) -> Result<ValidationReport> {
    if n_samples < 100 {
        return Err(Error::Precondition(format!("need at least 100 samples, got {n_samples}")));
    }
    let mut worst = 0.0f64;
    let mut worst_name: Option<&'static str> = None;
    let mut note = |name: &'static str, v: f64| {
        if v > worst {
            worst = v;
            worst_name = Some(name);
        }
    };
    let eval = |u: f64, k: usize| -> Result<f64> {
        let v = p.derivative(u, k);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { what: "potential evaluation", at: u })
        }
    };

    let d1 = eval(-1.0, 1)?.abs().max(eval(1.0, 1)?.abs());
    let wells_are_critical = d1 <= WELL_TOL;
    if !wells_are_critical {
        note("wells_are_critical", d1);
    }
    let d2 = eval(-1.0, 2)?.min(eval(1.0, 2)?);
    let wells_are_strict_minima = d2 > 0.0;
    if !wells_are_strict_minima {
        note("wells_are_strict_minima", -d2);
    }
    let f_low = eval(-1.0, 0)?;
    let f_high = eval(1.0, 0)?;
    let depth_gap = (f_low - f_high).abs();
    let equal_depth = depth_gap <= WELL_TOL;
    if !equal_depth {
        note("equal_depth", depth_gap);
    }

    let r0 = p.sign_radius;
    let lo = -r0 - 2.0;
    let hi = r0 + 2.0;
    let mut above_wells_inside = true;
    let mut sign_condition = true;
    for k in 0..n_samples {
        let u = lo + (hi - lo) * k as f64 / (n_samples - 1) as f64;
        let f = eval(u, 0)?;
        let df = eval(u, 1)?;
        if u > -1.0 && u < 1.0 && f <= f_high {
            above_wells_inside = false;
            note("above_wells_inside", f_high - f);
        }
        if u.abs() >= r0 && u * df < -WELL_TOL {
            sign_condition = false;
            note("sign_condition", -u * df);
        }
    }
    Ok(ValidationReport {
        wells_are_critical,
        wells_are_strict_minima,
        equal_depth,
        above_wells_inside,
        sign_condition,
        worst_violation: worst,
        worst_condition: worst_name.map(str::to_string),
    })
}

/// `c_f = ∫_{−1}^{1} √(2(f(r) − f(−1))) dr`, the energy per unit length of a
/// flat interface.
pub fn surface_constant(p: &Potential, quad_tol: f64) -> Result<f64> {
    // probe the radicand first so an invalid potential is reported as such
    for k in 0..=200 {
        let u = -1.0 + 2.0 * k as f64 / 200.0;
        p.profile_speed(u)?;
    }
    let failure = RefCell::new(None);
    let value = quadrature::integrate(
        |r| match p.profile_speed(r) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        -1.0,
        1.0,
        quad_tol,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    if value <= 0.0 {
        return Err(Error::InvalidPotential(format!("surface constant {value} is not positive")));
    }
    Ok(value)
}

/// Shape of the bump used for `σ̂′`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BumpShape {
    /// `exp(−1/(1 − x²))`, smooth with compact support.
    #[default]
    Exponential,
    /// `(1 − x²)⁵`, only C⁴ at the support edge; used to probe shape sensitivity.
    Polynomial,
}

impl BumpShape {
    /// Bump value and its first two derivatives at `x ∈ ℝ` (zero outside `(−1, 1)`).
    fn eval(self, x: f64) -> [f64; 3] {
        let q = 1.0 - x * x;
        if q <= 0.0 {
            return [0.0; 3];
        }
        match self {
            BumpShape::Exponential => {
                // exp(-1/q) underflows long before the rational factors overflow
                if q < 1.0 / 700.0 {
                    return [0.0; 3];
                }
                let b = (-1.0 / q).exp();
                let g1 = -2.0 * x / (q * q);
                let g2 = -2.0 / (q * q) - 8.0 * x * x / (q * q * q);
                [b, b * g1, b * (g1 * g1 + g2)]
            }
            BumpShape::Polynomial => {
                let q3 = q * q * q;
                let q4 = q3 * q;
                [q4 * q, -10.0 * x * q4, -10.0 * q4 + 80.0 * x * x * q3]
            }
        }
    }
}

/// Number of panels in the cumulative table for `σ̂`.
const SIGMA_PANELS: usize = 64;

/// Boundary contact energy `σ_α = cos α · σ̂` and its derivatives.
#[derive(Debug, Clone)]
pub struct BoundaryEnergy {
    alpha: f64,
    cos_alpha: f64,
    surface_constant: f64,
    half_width: f64,
    shape: BumpShape,
    /// `∫ b(u/w) du` over the support.
    bump_mass: f64,
    /// Cumulative bump integral at the panel edges of `[−w, w]`.
    cumulative: Vec<f64>,
    quad_tol: f64,
}

/// Default support margin of `σ̂′` inside `(−1, 1)`.
pub const DEFAULT_SUPPORT_MARGIN: f64 = 0.1;
/// Default absolute quadrature tolerance.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

/// Builds `σ_α` with the default exponential bump.
pub fn build_sigma(p: &Potential, alpha: f64, support_margin: f64) -> Result<BoundaryEnergy> {
    build_sigma_with(p, alpha, support_margin, BumpShape::Exponential, DEFAULT_QUAD_TOL)
}

/// Builds `σ_α`: `σ̂′ = −c_f · B` with `B` a bump of unit mass supported in
/// `[−1 + margin, 1 − margin]`, and `σ̂(−1) = c_f / 2`.
pub fn build_sigma_with(
    p: &Potential,
    alpha: f64,
    support_margin: f64,
    shape: BumpShape,
    quad_tol: f64,
) -> Result<BoundaryEnergy> {
    if !(alpha > 0.0 && alpha < std::f64::consts::PI) {
        return Err(Error::Domain(format!("contact angle {alpha} rad outside (0, π)")));
    }
    if !(support_margin > 0.0 && support_margin < 1.0) {
        return Err(Error::Domain(format!("support margin {support_margin} outside (0, 1)")));
    }
    let c_f = surface_constant(p, quad_tol)?;
    let w = 1.0 - support_margin;
    let panel_tol = (quad_tol / SIGMA_PANELS as f64).max(1e-16);
    let mut cumulative = Vec::with_capacity(SIGMA_PANELS + 1);
    cumulative.push(0.0);
    let mut acc = 0.0;
    for k in 0..SIGMA_PANELS {
        let a = -w + 2.0 * w * k as f64 / SIGMA_PANELS as f64;
        let b = -w + 2.0 * w * (k + 1) as f64 / SIGMA_PANELS as f64;
        acc += quadrature::integrate(|u| shape.eval(u / w)[0], a, b, panel_tol)?;
        cumulative.push(acc);
    }
    Ok(BoundaryEnergy {
        alpha,
        cos_alpha: cos_snapped(alpha),
        surface_constant: c_f,
        half_width: w,
        shape,
        bump_mass: acc,
        cumulative,
        quad_tol: panel_tol,
    })
}

/// `cos α`, exactly zero at the right angle so that the neutral case carries
/// no spurious boundary forcing.
pub fn cos_snapped(alpha: f64) -> f64 {
    if (alpha - FRAC_PI_2).abs() <= 4.0 * f64::EPSILON {
        0.0
    } else {
        alpha.cos()
    }
}

impl BoundaryEnergy {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn cos_alpha(&self) -> f64 {
        self.cos_alpha
    }

    pub fn surface_constant(&self) -> f64 {
        self.surface_constant
    }

    pub fn shape(&self) -> BumpShape {
        self.shape
    }

    /// Half-width `w` of the support `[−w, w]` of `σ̂′`.
    pub fn support_half_width(&self) -> f64 {
        self.half_width
    }

    fn bump_fraction(&self, u: f64) -> f64 {
        let w = self.half_width;
        if u <= -w {
            return 0.0;
        }
        if u >= w {
            return 1.0;
        }
        let pos = (u + w) / (2.0 * w) * SIGMA_PANELS as f64;
        let k = (pos.floor() as usize).min(SIGMA_PANELS - 1);
        let a = -w + 2.0 * w * k as f64 / SIGMA_PANELS as f64;
        let partial = quadrature::integrate(|x| self.shape.eval(x / w)[0], a, u, self.quad_tol)
            .expect("bump integrand is bounded and finite");
        (self.cumulative[k] + partial) / self.bump_mass
    }

    /// `σ̂(u)`.
    pub fn sigma_hat(&self, u: f64) -> f64 {
        self.surface_constant * (0.5 - self.bump_fraction(u))
    }

    /// `σ̂′(u)`.
    pub fn sigma_hat_d1(&self, u: f64) -> f64 {
        -self.surface_constant * self.shape.eval(u / self.half_width)[0] / self.bump_mass
    }

    pub fn sigma(&self, u: f64) -> f64 {
        self.cos_alpha * self.sigma_hat(u)
    }

    pub fn d1(&self, u: f64) -> f64 {
        if self.cos_alpha == 0.0 {
            return 0.0;
        }
        self.cos_alpha * self.sigma_hat_d1(u)
    }

    pub fn d2(&self, u: f64) -> f64 {
        if self.cos_alpha == 0.0 {
            return 0.0;
        }
        let w = self.half_width;
        -self.cos_alpha * self.surface_constant * self.shape.eval(u / w)[1] / (w * self.bump_mass)
    }

    pub fn d3(&self, u: f64) -> f64 {
        if self.cos_alpha == 0.0 {
            return 0.0;
        }
        let w = self.half_width;
        -self.cos_alpha * self.surface_constant * self.shape.eval(u / w)[2] / (w * w * self.bump_mass)
    }

    /// `σ_α(−1) − σ_α(1)`, equal to `cos α · c_f` up to quadrature error.
    pub fn jump(&self) -> f64 {
        self.sigma(-1.0) - self.sigma(1.0)
    }

    /// Samples `(u, σ_α(u), σ_α′(u))` at `n` uniform points of `[lo, hi]`.
    pub fn sample(&self, lo: f64, hi: f64, n: usize) -> Vec<[f64; 3]> {
        (0..n)
            .map(|k| {
                let u = if n == 1 { lo } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 };
                [u, self.sigma(u), self.d1(u)]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn quartic_passes_validation() {
        let p = Potential::quartic().with_sign_radius(2.0);
        let r = validate_potential(&p, 1000).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.worst_violation, 0.0);
    }

    #[test]
    fn single_well_fails_inside_condition() {
        let p = Potential::polynomial(vec![0.0, 0.0, 1.0], 1.0);
        let r = validate_potential(&p, 500).unwrap();
        assert!(!r.passed());
        assert!(!r.above_wells_inside);
    }

    #[test]
    fn tilted_quartic_fails_equal_depth() {
        let p = Potential::polynomial(vec![0.5, 0.1, -1.0, 0.0, 0.5], 2.0);
        let r = validate_potential(&p, 500).unwrap();
        assert!(!r.equal_depth);
        assert!(!r.passed());
    }

    #[test]
    fn nan_evaluator_names_point() {
        let p = Potential::custom("bad", Arc::new(|u: f64, _k: usize| if u > 2.5 { f64::NAN } else { 0.0 }), 1.0);
        match validate_potential(&p, 200) {
            Err(Error::NonFinite { at, .. }) => assert!(at > 2.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(validate_potential(&Potential::quartic(), 10).is_err());
    }

    #[test]
    fn polynomial_derivatives() {
        let p = Potential::quartic();
        let u = 0.3;
        assert!((p.f(u) - 0.5 * (1.0 - u * u).powi(2)).abs() < 1e-15);
        assert!((p.df(u) - 2.0 * u * (u * u - 1.0)).abs() < 1e-15);
        assert!((p.d2f(u) - (6.0 * u * u - 2.0)).abs() < 1e-15);
        assert!((p.d3f(u) - 12.0 * u).abs() < 1e-15);
    }

    #[test]
    fn surface_constant_scales_with_sqrt() {
        let c1 = surface_constant(&Potential::quartic(), 1e-13).unwrap();
        let c4 = surface_constant(&Potential::scaled_quartic(4.0), 1e-13).unwrap();
        assert!((c4 - 2.0 * c1).abs() < 1e-12);
    }

    #[test]
    fn surface_constant_rejects_negative_radicand() {
        // f(0) < f(±1)
        let p = Potential::polynomial(vec![-1.0, 0.0, 1.0], 1.0);
        assert!(matches!(surface_constant(&p, 1e-10), Err(Error::InvalidPotential(_))));
    }

    #[test]
    fn right_angle_sigma_is_inert() {
        let s = build_sigma(&Potential::quartic(), PI / 2.0, 0.1).unwrap();
        assert_eq!(s.cos_alpha(), 0.0);
        for k in 0..=40 {
            let u = -2.0 + 0.1 * k as f64;
            assert_eq!(s.d1(u), 0.0);
            assert_eq!(s.sigma(u), 0.0);
        }
    }

    #[test]
    fn sigma_vanishes_outside_support() {
        let s = build_sigma(&Potential::quartic(), 1.0, 0.1).unwrap();
        for u in [0.95, -0.95, 1.0, -1.0, 1.5, -3.0] {
            assert_eq!(s.d1(u), 0.0);
            assert_eq!(s.d2(u), 0.0);
            assert_eq!(s.d3(u), 0.0);
        }
    }

    #[test]
    fn bad_angle_rejected() {
        assert!(matches!(build_sigma(&Potential::quartic(), 0.0, 0.1), Err(Error::Domain(_))));
        assert!(matches!(build_sigma(&Potential::quartic(), PI, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn sigma_derivatives_match_finite_differences() {
        for shape in [BumpShape::Exponential, BumpShape::Polynomial] {
            let s = build_sigma_with(&Potential::quartic(), 1.2, 0.1, shape, 1e-12).unwrap();
            let h = 1e-5;
            for k in 0..17 {
                let u = -0.8 + 0.1 * k as f64;
                let fd1 = (s.sigma(u + h) - s.sigma(u - h)) / (2.0 * h);
                let fd2 = (s.d1(u + h) - s.d1(u - h)) / (2.0 * h);
                let fd3 = (s.d2(u + h) - s.d2(u - h)) / (2.0 * h);
                assert!((fd1 - s.d1(u)).abs() < 1e-7, "{shape:?} σ' at {u}");
                assert!((fd2 - s.d2(u)).abs() < 1e-6, "{shape:?} σ'' at {u}");
                assert!((fd3 - s.d3(u)).abs() < 1e-5, "{shape:?} σ''' at {u}");
            }
        }
    }
}
