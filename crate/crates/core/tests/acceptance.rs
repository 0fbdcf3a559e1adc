//! Acceptance suite. One line per criterion; exits non-zero if any fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use acflow::acsolver::{run_ac, step_ac, AcModel, Field2D, Forcing, PolarGrid, Stepper};
use acflow::geometry::{FrontCurve, Vec2};
use acflow::halfplane::{
    check_flux_identity, expansion_coefficients, solve_linearized_halfplane, solve_nonlinear_halfplane,
    HalfPlaneField, HalfPlaneGrid, HalfPlaneSpec,
};
use acflow::harness::{convergence_study, hausdorff, ConvergenceReport, StudyConfig};
use acflow::mcf::{run_mcf, unit_disk_chord};
use acflow::potential::{build_sigma, surface_constant, Potential, DEFAULT_QUAD_TOL, DEFAULT_SUPPORT_MARGIN};
use acflow::profile::{solve_optimal_profile, solve_linearized_ode, LinearizedOutcome};
use acflow::spectrum::{constant_form, min_eigenvalue, spectrum_sweep, SpectrumConfig, DEFAULT_TOL};

const C_F: f64 = 4.0 / 3.0;

struct Suite {
    failed: usize,
}

impl Suite {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }

    fn run<F: FnOnce() -> Result<(bool, String), String>>(&mut self, name: &str, f: F) {
        let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        self.check(name, pass, detail);
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn optimal_profile() -> Result<(bool, String), String> {
    let start = Instant::now();
    let prof = solve_optimal_profile(&Potential::quartic(), 8.0, 2000).map_err(|e| e.to_string())?;
    let t = secs(start.elapsed());
    let err = prof.z().iter().zip(prof.theta()).map(|(z, v)| (v - z.tanh()).abs()).fold(0.0, f64::max);
    let res = prof.ode_residual();
    Ok((err <= 1e-6 && res <= 1e-8 && t < 1.0, format!("sup|θ−tanh| = {err:.2e}, residual = {res:.2e}, {t:.3} s")))
}

fn surface_constant_check() -> Result<(bool, String), String> {
    let p = Potential::quartic();
    let c = surface_constant(&p, DEFAULT_QUAD_TOL).map_err(|e| e.to_string())?;
    let prof = solve_optimal_profile(&p, 10.0, 4000).map_err(|e| e.to_string())?;
    let n = prof.derivative_norm_sq();
    Ok(((c - C_F).abs() <= 1e-8 && (n - c).abs() <= 1e-8, format!("c_f = {c:.12}, ∫θ′² = {n:.12}")))
}

fn linearized_ode() -> Result<(bool, String), String> {
    let prof = solve_optimal_profile(&Potential::quartic(), 10.0, 4000).map_err(|e| e.to_string())?;
    let a: Vec<f64> = prof.theta_d2().iter().map(|v| -2.0 * v).collect();
    let out = solve_linearized_ode(&prof, &a).map_err(|e| e.to_string())?;
    let sol = out.solution().ok_or("closed-form data rejected")?;
    let err = prof
        .z()
        .iter()
        .zip(prof.theta_d1())
        .zip(&sol.w)
        .map(|((z, d), w)| (w - z * d).abs())
        .fold(0.0, f64::max);
    let integral = match solve_linearized_ode(&prof, prof.theta_d1()).map_err(|e| e.to_string())? {
        LinearizedOutcome::Rejected { integral, .. } => integral,
        _ => return Ok((false, format!("w error {err:.2e}, A = θ₀′ accepted"))),
    };
    Ok((
        err <= 1e-4 && (integral - C_F).abs() <= 1e-6,
        format!("max|w − zθ₀′| = {err:.2e}, rejection integral = {integral:.9}"),
    ))
}

fn halfplane_field(alpha: f64, grid: HalfPlaneGrid) -> Result<HalfPlaneField, String> {
    let p = Potential::quartic();
    let s = build_sigma(&p, alpha, DEFAULT_SUPPORT_MARGIN).map_err(|e| e.to_string())?;
    solve_nonlinear_halfplane(&p, &s, &HalfPlaneSpec { grid, ..Default::default() }).map_err(|e| e.to_string())
}

fn halfplane_right_angle() -> Result<(bool, String), String> {
    let start = Instant::now();
    let f = halfplane_field(FRAC_PI_2, HalfPlaneGrid::default())?;
    let t = secs(start.elapsed());
    let mut dev = 0.0f64;
    for j in 0..f.grid.nodes_h {
        for i in 0..f.grid.nodes_r {
            dev = dev.max((f.value(i, j) - f.theta[i]).abs());
        }
    }
    Ok((
        f.newton_steps <= 1 && f.residual <= 1e-10 && dev == 0.0 && t < 60.0,
        format!("{} Newton steps, residual {:.2e}, |v − θ₀| = {dev:.1e}, {t:.1} s", f.newton_steps, f.residual),
    ))
}

fn halfplane_tilted(alpha: f64) -> Result<(bool, String), String> {
    let start = Instant::now();
    let f = halfplane_field(alpha, HalfPlaneGrid::default())?;
    let t = secs(start.elapsed());
    let flux = check_flux_identity(&f, 0.75 * f.grid.height).map_err(|e| e.to_string())?.abs();
    let e = expansion_coefficients(&f);
    let n = e.theta_norm_sq;
    let slices = e.i_slice.iter().all(|s| (0.75 * n..=1.25 * n).contains(s));
    let (lo, hi) = e.i_slice.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &s| (a.min(s), b.max(s)));
    let b1 = 0.5 * f.alpha.sin() * n;
    let pass = f.newton_steps <= 10
        && f.residual <= 1e-10
        && flux <= 1e-3 * C_F
        && slices
        && e.i_mix <= 0.25 * n
        && e.b1_plus.abs() >= b1
        && e.b1_minus.abs() >= b1
        && t < 60.0;
    Ok((
        pass,
        format!(
            "{} steps, flux {flux:.2e}, I_slice/‖θ₀′‖² ∈ [{:.4}, {:.4}], I_mix/‖θ₀′‖² = {:.2e}, |b1±| = {:.4}/{:.4} ≥ {b1:.4}, {t:.1} s",
            f.newton_steps,
            lo / n,
            hi / n,
            e.i_mix / n,
            e.b1_plus.abs(),
            e.b1_minus.abs()
        ),
    ))
}

/// Error of the linearized half-plane solve against `u* = e^{−(R²+H)} sin R`.
fn manufactured_halfplane_error(grid: HalfPlaneGrid) -> Result<f64, String> {
    let f = halfplane_field(FRAC_PI_2 + 0.2, grid)?;
    let c = f.cos_alpha;
    let p = f.potential();
    let u = |r: f64, h: f64| (-(r * r + h)).exp() * r.sin();
    let ur = |r: f64, h: f64| (-(r * r + h)).exp() * (r.cos() - 2.0 * r * r.sin());
    let urr =
        |r: f64, h: f64| (-(r * r + h)).exp() * (-r.sin() - 4.0 * r * r.cos() + (4.0 * r * r - 2.0) * r.sin());
    let mut big_g = vec![0.0; grid.len()];
    for j in 0..grid.nodes_h {
        for i in 0..grid.nodes_r {
            let (r, h) = (grid.r(i), grid.h(j));
            let k = grid.index(i, j);
            big_g[k] = -urr(r, h) - u(r, h) - 2.0 * c * ur(r, h) + p.d2f(f.values[k]) * u(r, h);
        }
    }
    let g: Vec<f64> = (0..grid.nodes_r)
        .map(|i| {
            let r = grid.r(i);
            c * ur(r, 0.0) + u(r, 0.0) + f.sigma().d2(f.values[i]) * u(r, 0.0)
        })
        .collect();
    let out = solve_linearized_halfplane(&f, &big_g, &g, 1e-2).map_err(|e| e.to_string())?;
    let sol = out.solution().ok_or("manufactured data rejected")?;
    let mut err = 0.0f64;
    for j in (0..grid.nodes_h).take_while(|&j| grid.h(j) <= 0.5 * grid.height) {
        for i in 0..grid.nodes_r {
            err = err.max((sol.values[grid.index(i, j)] - u(grid.r(i), grid.h(j))).abs());
        }
    }
    Ok(err)
}

fn linearized_halfplane() -> Result<(bool, String), String> {
    let g0 = HalfPlaneGrid::new(10.0, 10.0, 101, 51).map_err(|e| e.to_string())?;
    let mut e = Vec::new();
    for g in [g0, g0.refined(), g0.refined().refined()] {
        e.push(manufactured_halfplane_error(g)?);
    }
    let (p1, p2) = ((e[0] / e[1]).log2(), (e[1] / e[2]).log2());
    Ok((p1 >= 1.9 && p2 >= 1.9, format!("errors {:.2e} {:.2e} {:.2e}, orders {p1:.3} {p2:.3}", e[0], e[1], e[2])))
}

fn max_drift(a: &FrontCurve, b: &FrontCurve) -> f64 {
    a.nodes.iter().zip(&b.nodes).map(|(p, q)| p.dist(*q)).fold(0.0, f64::max)
}

fn mcf_diameter() -> Result<(bool, String), String> {
    let f0 = unit_disk_chord(FRAC_PI_2, 200, 0.0).map_err(|e| e.to_string())?;
    let dt = 0.25 * (2.0f64 / 200.0).powi(2);
    let traj = run_mcf(&f0, 1000.0 * dt, dt, 1).map_err(|e| e.to_string())?;
    let drift = traj.snapshots.iter().map(|s| max_drift(&f0, s)).fold(0.0, f64::max);
    Ok((traj.steps == 1000 && drift <= 1e-6, format!("{} steps, drift {drift:.2e}", traj.steps)))
}

fn mcf_chord() -> Result<(bool, String), String> {
    let alpha = PI / 3.0;
    let mut drift = Vec::new();
    for n in [200usize, 400] {
        let f0 = unit_disk_chord(alpha, n, 0.0).map_err(|e| e.to_string())?;
        let dt = 0.25 * (f0.length() / n as f64).powi(2);
        let traj = run_mcf(&f0, 1000.0 * dt, dt, 1).map_err(|e| e.to_string())?;
        drift.push(traj.snapshots.iter().map(|s| max_drift(&f0, s)).fold(0.0, f64::max));
    }
    // the exact chord is stationary, so the order is measured on a bumped one
    let t = 0.01;
    let bumped = |n: usize| -> Result<Vec<Vec2>, String> {
        let f0 = unit_disk_chord(alpha, n, 0.05).map_err(|e| e.to_string())?;
        let dt = 0.25 * (f0.length() / 200.0).powi(2) * (200.0 / n as f64).powi(2);
        let mut traj = run_mcf(&f0, t, dt, usize::MAX).map_err(|e| e.to_string())?;
        Ok(traj.snapshots.pop().ok_or("empty trajectory")?.nodes)
    };
    let reference = bumped(1600)?;
    let e200 = hausdorff(&bumped(200)?, &reference).map_err(|e| e.to_string())?;
    let e400 = hausdorff(&bumped(400)?, &reference).map_err(|e| e.to_string())?;
    let order = (e200 / e400).log2();
    Ok((
        drift.iter().all(|&d| d <= 1e-3) && order >= 1.0,
        format!(
            "stationary drift {:.2e} (N=200), {:.2e} (N=400); bumped error {e200:.2e} → {e400:.2e}, order {order:.2}",
            drift[0], drift[1]
        ),
    ))
}

fn ac_model(eps: f64, alpha: f64) -> Result<Arc<AcModel>, String> {
    let p = Potential::quartic();
    let b = build_sigma(&p, alpha, DEFAULT_SUPPORT_MARGIN).map_err(|e| e.to_string())?;
    Ok(Arc::new(AcModel::new(p, Some(b), eps).map_err(|e| e.to_string())?))
}

fn ac_constant() -> Result<(bool, String), String> {
    let eps = 0.05;
    let g = Arc::new(PolarGrid::for_eps(eps).map_err(|e| e.to_string())?);
    let u = Field2D::constant(g, ac_model(eps, 1.2)?, 1.0).map_err(|e| e.to_string())?;
    let next = step_ac(&u, 0.1 * eps * eps).map_err(|e| e.to_string())?;
    let exact = next.center() == 1.0 && next.values().iter().all(|&v| v == 1.0);
    Ok((exact, format!("u ≡ 1 after one step at α = 1.2: {}", if exact { "bitwise" } else { "changed" })))
}

fn ac_diameter() -> Result<(bool, String), String> {
    let eps = 0.05;
    let g = Arc::new(PolarGrid::for_eps(eps).map_err(|e| e.to_string())?);
    let u0 = Field2D::from_fn(g, ac_model(eps, FRAC_PI_2)?, |x| (x.y / eps).tanh()).map_err(|e| e.to_string())?;
    let traj = run_ac(&u0, 0.05, 0.1 * eps * eps, usize::MAX).map_err(|e| e.to_string())?;
    let worst = traj.energy.windows(2).map(|w| (w[1].1 - w[0].1) / w[0].1.abs()).fold(f64::NEG_INFINITY, f64::max);
    let bound = 1.0f64.max(u0.max_abs()) + 1e-8;
    Ok((
        worst <= 1e-10 && traj.max_abs <= bound,
        format!("{} steps, max relative energy increase {worst:.2e}, ‖u‖∞ = {:.15}", traj.steps, traj.max_abs),
    ))
}

fn ac_manufactured() -> Result<(bool, String), String> {
    // u* = e^{-t} sin(x + 2y) / 2 with ε = 1 and a contact angle of 1.2
    let eps = 1.0;
    let m = ac_model(eps, 1.2)?;
    let b = m.boundary().ok_or("no boundary energy")?.clone();
    let exact = |x: Vec2, t: f64| 0.5 * (-t).exp() * (x.x + 2.0 * x.y).sin();
    let bulk = |x: Vec2, t: f64| {
        let u = exact(x, t);
        4.0 * u + 2.0 * u * u * u - 2.0 * u
    };
    let boundary = move |x: Vec2, t: f64| {
        let dn = 0.5 * (-t).exp() * (x.x + 2.0 * x.y).cos() * (x.x + 2.0 * x.y);
        dn + b.d1(exact(x, t)) / eps
    };
    let forcing = Forcing { bulk: &bulk, boundary: &boundary };
    let horizon = 0.1;
    let mut errors = Vec::new();
    for n in [16usize, 32, 64] {
        let g = Arc::new(PolarGrid::new(n, 4 * n).map_err(|e| e.to_string())?);
        let mut u = Field2D::from_fn(g.clone(), m.clone(), |x| exact(x, 0.0)).map_err(|e| e.to_string())?;
        let steps = (horizon * 4.0 * (n * n) as f64).round() as usize;
        let stepper = Stepper::new(g, m.clone(), horizon / steps as f64).map_err(|e| e.to_string())?;
        for _ in 0..steps {
            u = stepper.step_forced(&u, &forcing).map_err(|e| e.to_string())?;
        }
        errors.push(u.nodes().map(|(x, v)| (v - exact(x, horizon)).abs()).fold(0.0, f64::max));
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok((
        orders.iter().all(|&p| p >= 1.9),
        format!("errors {:.2e} {:.2e} {:.2e}, orders {:.3} {:.3}", errors[0], errors[1], errors[2], orders[0], orders[1]),
    ))
}

fn spectrum(alpha_deg: f64) -> Result<(bool, String), String> {
    let cfg = SpectrumConfig::new(alpha_deg.to_radians(), vec![0.1, 0.05, 0.025]);
    let start = Instant::now();
    let report = spectrum_sweep(&cfg).map_err(|e| e.to_string())?;
    let t = secs(start.elapsed());
    let lambdas: Vec<String> = report.records.iter().map(|r| format!("{:.3}", r.lambda_min)).collect();
    // the whole sweep against the per-ε budget
    Ok((
        report.lambda_ratio <= 3.0 && t < 300.0,
        format!(
            "λ_min = [{}], ratio {:.2} while 1/ε² varies {:.0}×, sweep {t:.0} s",
            lambdas.join(", "),
            report.lambda_ratio,
            report.inverse_eps_sq_ratio
        ),
    ))
}

fn spectrum_constant() -> Result<(bool, String), String> {
    let mut worst = 0.0f64;
    for alpha in [FRAC_PI_2, 80f64.to_radians()] {
        for eps in [0.1, 0.05] {
            let form = constant_form(eps, alpha, 1.0).map_err(|e| e.to_string())?;
            let eig = min_eigenvalue(&form, DEFAULT_TOL).map_err(|e| e.to_string())?;
            let exact = 4.0 / (eps * eps);
            worst = worst.max(((eig.value - exact) / exact).abs());
        }
    }
    Ok((worst <= 1e-6, format!("max relative error of f″(1)/ε² = {worst:.2e}")))
}

fn study(alpha_deg: f64) -> Result<(ConvergenceReport, f64), String> {
    let cfg = StudyConfig::new(alpha_deg.to_radians(), vec![0.08, 0.04, 0.02], 0.05);
    let start = Instant::now();
    let report = convergence_study(&cfg).map_err(|e| e.to_string())?;
    Ok((report, secs(start.elapsed())))
}

fn convergence(total: &mut f64, alpha_deg: f64) -> Result<(bool, String), String> {
    let (r, t) = study(alpha_deg)?;
    *total += t;
    let d: Vec<String> = r.runs.iter().map(|x| format!("{:.3e}", x.sup_distance)).collect();
    let p = r.distance_fit.map(|f| f.rate).unwrap_or(f64::NAN);
    Ok((
        r.distance_monotone && p >= 0.8 && r.runs.iter().all(|x| x.failure.is_none()),
        format!("sup distances [{}], fitted p = {p:.3}, monotone = {}, {t:.0} s", d.join(", "), r.distance_monotone),
    ))
}

fn determinism() -> Result<(bool, String), String> {
    let cfg = StudyConfig::new(80f64.to_radians(), vec![0.16, 0.12, 0.08], 0.01);
    let json = || -> Result<String, String> {
        let r = convergence_study(&cfg).map_err(|e| e.to_string())?;
        serde_json::to_string_pretty(&r).map_err(|e| e.to_string())
    };
    let (a, b) = (json()?, json()?);
    Ok((a == b, format!("two runs at ε = [0.16, 0.12, 0.08], T = 0.01: {} bytes, identical = {}", a.len(), a == b)))
}

fn main() -> ExitCode {
    let mut s = Suite { failed: 0 };
    s.run("optimal profile", optimal_profile);
    s.run("surface constant", surface_constant_check);
    s.run("linearized ODE", linearized_ode);
    s.run("half-plane α = π/2", halfplane_right_angle);
    s.run("half-plane α = π/2 + 0.2", || halfplane_tilted(FRAC_PI_2 + 0.2));
    s.run("half-plane α = π/2 − 0.2", || halfplane_tilted(FRAC_PI_2 - 0.2));
    s.run("linearized half-plane order", linearized_halfplane);
    s.run("MCF diameter stationarity", mcf_diameter);
    s.run("MCF chord stationarity, cos α = 0.5", mcf_chord);
    s.run("AC constant state", ac_constant);
    s.run("AC energy and maximum bound, ε = 0.05", ac_diameter);
    s.run("AC manufactured order", ac_manufactured);
    s.run("spectrum constant field", spectrum_constant);
    s.run("spectrum α = 90°", || spectrum(90.0));
    s.run("spectrum α = 80°", || spectrum(80.0));
    let mut total = 0.0;
    s.run("convergence α = 90°", || convergence(&mut total, 90.0));
    s.run("convergence α = 80°", || convergence(&mut total, 80.0));
    s.check("convergence sweep runtime", total < 1800.0, format!("{total:.0} s"));
    s.run("determinism", determinism);
    println!("{} failed", s.failed);
    if s.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
