//! Command dispatch. Each command writes whitespace-separated tables with a
//! `#` header and one JSON summary into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use acflow::acsolver::{run_ac, AcModel, PolarGrid};
use acflow::halfplane::{
    check_flux_identity, expansion_coefficients, solve_nonlinear_halfplane, DecayWeights, HalfPlaneGrid, HalfPlaneSpec,
};
use acflow::harness::{convergence_study, extract_zero_set, robin_residual, well_prepared_initial, InitialFront, StudyConfig};
use acflow::mcf::{contact_angles, energy_probe, run_mcf, unit_disk_chord};
use acflow::potential::{build_sigma_with, cos_snapped, surface_constant, BoundaryEnergy, Potential, DEFAULT_QUAD_TOL};
use acflow::profile::solve_optimal_profile;
use acflow::spectrum::{constant_form, min_eigenvalue, spectrum_sweep, SpectrumConfig};

use crate::config::{Command, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] acflow::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl RunError {
    /// 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        if self.exit_code() == 2 {
            "numerical failure"
        } else {
            "domain error"
        }
    }
}

type Result<T> = std::result::Result<T, RunError>;

/// Collects the files written by a run.
pub struct Writer {
    dir: PathBuf,
    pub written: Vec<String>,
}

impl Writer {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn file(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| RunError::Io { path, source })?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
        s.push('\n');
        self.file(name, &s)
    }

    /// Table with a header of `name[unit]` columns. Rows separated by
    /// `None` get a blank line, for blocks of curves.
    pub fn table(&mut self, name: &str, title: &str, columns: &[(&str, &str)], rows: &[Option<Vec<f64>>]) -> Result<()> {
        let mut s = format!("# {title}\n#");
        for (c, u) in columns {
            let _ = write!(s, " {c}[{u}]");
        }
        s.push('\n');
        for row in rows {
            match row {
                Some(r) => {
                    // + 0.0 turns −0 into 0
                    let cells: Vec<String> = r.iter().map(|v| format!("{:.12e}", v + 0.0)).collect();
                    s.push_str(&cells.join(" "));
                    s.push('\n');
                }
                None => s.push('\n'),
            }
        }
        self.file(name, &s)
    }
}

fn potential(cfg: &RunConfig) -> Potential {
    Potential::scaled_quartic(cfg.potential_scale)
}

fn sigma(cfg: &RunConfig, p: &Potential) -> Result<BoundaryEnergy> {
    Ok(build_sigma_with(p, cfg.alpha, cfg.support_margin, cfg.bump_shape, DEFAULT_QUAD_TOL)?)
}

pub fn run(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    match cfg.cmd {
        Command::Profile => profile(cfg, w),
        Command::Sigma => sigma_cmd(cfg, w),
        Command::HalfPlane => halfplane(cfg, w),
        Command::Mcf => mcf(cfg, w),
        Command::Ac => ac(cfg, w),
        Command::Spectrum => spectrum(cfg, w),
        Command::Converge => converge(cfg, w),
    }
}

fn profile(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let p = potential(cfg);
    let prof = solve_optimal_profile(&p, cfg.half_length, cfg.intervals)?;
    let c_f = surface_constant(&p, DEFAULT_QUAD_TOL)?;
    let k = cfg.potential_scale.sqrt();
    let rows: Vec<Option<Vec<f64>>> = (0..prof.len())
        .map(|i| Some(vec![prof.z()[i], prof.theta()[i], prof.theta_d1()[i], prof.theta_d2()[i]]))
        .collect();
    w.table(
        "profile.dat",
        "optimal profile",
        &[("z", "1"), ("theta", "1"), ("theta_z", "1"), ("theta_zz", "1")],
        &rows,
    )?;
    let tanh_error = prof.z().iter().zip(prof.theta()).map(|(&z, &t)| (t - (k * z).tanh()).abs()).fold(0.0, f64::max);
    w.json(
        "profile.json",
        &json!({
            "potential": p.name(),
            "half_length": cfg.half_length,
            "intervals": cfg.intervals,
            "surface_constant": c_f,
            "derivative_norm_sq": prof.derivative_norm_sq(),
            "ode_residual": prof.ode_residual(),
            "first_integral_residual": prof.first_integral_residual(),
            "sup_error_vs_tanh": tanh_error,
            "decay_left": prof.decay_left(),
            "decay_right": prof.decay_right(),
        }),
    )
}

fn sigma_cmd(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let p = potential(cfg);
    let s = sigma(cfg, &p)?;
    let rows: Vec<Option<Vec<f64>>> =
        s.sample(-1.2, 1.2, cfg.samples).into_iter().map(|[u, v, d]| Some(vec![u, v, d, s.d2(u)])).collect();
    w.table(
        "sigma.dat",
        "boundary energy",
        &[("u", "1"), ("sigma", "1"), ("sigma_u", "1"), ("sigma_uu", "1")],
        &rows,
    )?;
    let c_f = s.surface_constant();
    w.json(
        "sigma.json",
        &json!({
            "potential": p.name(),
            "alpha": cfg.alpha,
            "alpha_deg": cfg.alpha.to_degrees(),
            "cos_alpha": s.cos_alpha(),
            "surface_constant": c_f,
            "jump": s.jump(),
            "compatibility_residual": s.jump() - cos_snapped(cfg.alpha) * c_f,
            "support_half_width": s.support_half_width(),
        }),
    )
}

fn halfplane(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let p = potential(cfg);
    let s = sigma(cfg, &p)?;
    let grid = HalfPlaneGrid::new(cfg.half_width, cfg.height, cfg.nodes_r, cfg.nodes_h)?;
    let spec = HalfPlaneSpec { grid, newton_tol: cfg.newton_tol, weights: DecayWeights::default() };
    let field = solve_nonlinear_halfplane(&p, &s, &spec)?;
    let coeff = expansion_coefficients(&field);
    let flux = check_flux_identity(&field, 0.5 * cfg.height)?;
    let mut rows = Vec::with_capacity(grid.len() + grid.nodes_h);
    for j in 0..grid.nodes_h {
        for i in 0..grid.nodes_r {
            let v = field.value(i, j);
            rows.push(Some(vec![grid.r(i), grid.h(j), v, v - field.theta[i]]));
        }
        rows.push(None);
    }
    w.table(
        "halfplane.dat",
        "half-plane solution",
        &[("R", "1"), ("H", "1"), ("v", "1"), ("v_minus_theta", "1")],
        &rows,
    )?;
    let dev = field.slice_deviation();
    let slices: Vec<Option<Vec<f64>>> =
        (0..grid.nodes_h).map(|j| Some(vec![grid.h(j), coeff.i_slice[j], dev[j]])).collect();
    w.table(
        "halfplane_slices.dat",
        "half-plane slices",
        &[("H", "1"), ("slice_energy", "1"), ("sup_deviation", "1")],
        &slices,
    )?;
    w.json(
        "halfplane.json",
        &json!({
            "alpha": cfg.alpha,
            "alpha_deg": cfg.alpha.to_degrees(),
            "grid": grid,
            "newton_steps": field.newton_steps,
            "residual": field.residual,
            "boundary_residual": field.boundary_residual,
            "weighted_residual": field.weighted_residual,
            "weighted_boundary_residual": field.weighted_boundary_residual,
            "max_deviation": dev.iter().fold(0.0f64, |a, &b| a.max(b)),
            "flux_residual": flux,
            "flux_height": 0.5 * cfg.height,
            "i_mix": coeff.i_mix,
            "b1_plus": coeff.b1_plus,
            "b1_minus": coeff.b1_minus,
            "theta_norm_sq": coeff.theta_norm_sq,
            "kernel_overlap": coeff.kernel_overlap,
        }),
    )
}

fn stride(horizon: f64, dt: f64, snapshots: usize) -> usize {
    let steps = (horizon / dt).ceil().max(1.0) as usize;
    (steps / snapshots).max(1)
}

fn mcf(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let front = unit_disk_chord(cfg.alpha, cfg.segments, cfg.bump)?;
    let spacing = front.length() / cfg.segments as f64;
    let dt = cfg.dt.unwrap_or(acflow::mcf::DEFAULT_DT_FACTOR * spacing * spacing);
    let traj = run_mcf(&front, cfg.horizon, dt, stride(cfg.horizon, dt, cfg.snapshots))?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for f in &traj.snapshots {
        rows.extend(f.nodes.iter().map(|x| Some(vec![f.t, x.x, x.y])));
        rows.push(None);
        let (a0, a1) = contact_angles(f);
        summary.push(json!({
            "t": f.t,
            "length": f.length(),
            "angle_start_deg": a0.to_degrees(),
            "angle_end_deg": a1.to_degrees(),
            "energy": energy_probe(f),
        }));
    }
    w.table("fronts.dat", "curvature-flow fronts", &[("t", "1"), ("x", "1"), ("y", "1")], &rows)?;
    w.json(
        "mcf.json",
        &json!({
            "alpha": cfg.alpha,
            "alpha_deg": cfg.alpha.to_degrees(),
            "dt": dt,
            "steps": traj.steps,
            "collapsed_at": traj.collapsed_at,
            "snapshots": summary,
        }),
    )
}

fn ac(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let eps = cfg.eps[0];
    let p = potential(cfg);
    let s = sigma(cfg, &p)?;
    let model = Arc::new(AcModel::new(p.clone(), Some(s), eps)?);
    let n_r = (cfg.cells_per_eps / eps).ceil() as usize;
    let n_phi = ((cfg.cells_per_eps * std::f64::consts::PI / eps).ceil() as usize).next_power_of_two();
    let grid = Arc::new(PolarGrid::new(n_r, n_phi)?);
    let front = unit_disk_chord(cfg.alpha, cfg.segments, cfg.bump)?;
    let prof = solve_optimal_profile(&p, acflow::profile::DEFAULT_HALF_LENGTH, acflow::profile::DEFAULT_INTERVALS)?;
    let u0 = well_prepared_initial(grid, model, &front, &prof, cfg.delta0)?;
    let dt = cfg.dt.unwrap_or(acflow::acsolver::DEFAULT_DT_FACTOR * eps * eps);
    let traj = run_ac(&u0, cfg.horizon, dt, stride(cfg.horizon, dt, cfg.snapshots))?;

    let rows: Vec<Option<Vec<f64>>> = traj.energy.iter().map(|&(t, e)| Some(vec![t, e])).collect();
    w.table("ac_energy.dat", "Allen-Cahn energy", &[("t", "1"), ("energy", "1")], &rows)?;
    let mut rows = Vec::new();
    let mut components = Vec::new();
    for u in &traj.snapshots {
        let zs = extract_zero_set(u);
        components.push(zs.polylines.len());
        if let Some(line) = zs.longest() {
            rows.extend(line.iter().map(|x| Some(vec![u.t(), x.x, x.y])));
        }
        rows.push(None);
    }
    w.table("ac_zero_set.dat", "Allen-Cahn zero set, longest component", &[("t", "1"), ("x", "1"), ("y", "1")], &rows)?;
    let monotone = traj.energy.windows(2).all(|e| e[1].1 <= e[0].1 + 1e-12 * e[0].1.abs().max(1.0));
    w.json(
        "ac.json",
        &json!({
            "eps": eps,
            "alpha": cfg.alpha,
            "alpha_deg": cfg.alpha.to_degrees(),
            "n_r": n_r,
            "n_phi": n_phi,
            "dt": dt,
            "steps": traj.steps,
            "max_abs": traj.max_abs,
            "energy_initial": traj.energy.first().map(|e| e.1),
            "energy_final": traj.energy.last().map(|e| e.1),
            "energy_monotone": monotone,
            "initial_robin_residual": robin_residual(&u0),
            "zero_set_components": components,
        }),
    )
}

fn spectrum(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let sc = SpectrumConfig {
        alpha: cfg.alpha,
        eps: cfg.eps.clone(),
        delta0: cfg.delta0,
        tol: cfg.tol,
        probes: cfg.probes,
        seed: cfg.seed,
        cells_per_eps: cfg.cells_per_eps,
        cells_exponent: cfg.cells_exponent,
    };
    let report = spectrum_sweep(&sc)?;
    let eps0 = cfg.eps[0];
    let constant = min_eigenvalue(&constant_form(eps0, cfg.alpha, 1.0)?, cfg.tol)?;
    let expected = 4.0 / (eps0 * eps0);
    let rows: Vec<Option<Vec<f64>>> = report
        .records
        .iter()
        .map(|r| {
            Some(vec![
                r.eps,
                1.0 / (r.eps * r.eps),
                r.lambda_min,
                r.iterations as f64,
                r.residual,
                r.gershgorin_lower,
                r.rayleigh_profile,
                r.probe_margin,
            ])
        })
        .collect();
    w.table(
        "spectrum.dat",
        "smallest eigenvalue of the linearized operator, leading-order approximate solution",
        &[
            ("eps", "1"),
            ("inv_eps_sq", "1"),
            ("lambda_min", "1"),
            ("iterations", "count"),
            ("residual", "1"),
            ("gershgorin_lower", "1"),
            ("rayleigh_profile", "1"),
            ("probe_margin", "1"),
        ],
        &rows,
    )?;
    w.json(
        "spectrum.json",
        &json!({
            "report": report,
            "constant_check": {
                "eps": eps0,
                "lambda_min": constant.value,
                "expected": expected,
                "relative_error": (constant.value - expected).abs() / expected,
            },
        }),
    )
}

fn converge(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let mut sc = StudyConfig::new(cfg.alpha, cfg.eps.clone(), cfg.horizon);
    sc.potential = potential(cfg);
    sc.support_margin = cfg.support_margin;
    sc.bump_shape = cfg.bump_shape;
    sc.dt_factor = cfg.dt_factor;
    sc.dt_exponent = cfg.dt_exponent;
    sc.mcf_dt_factor = cfg.mcf_dt_factor;
    sc.front = InitialFront { bump: cfg.bump, segments: cfg.segments };
    sc.delta0 = cfg.delta0;
    sc.cells_per_eps = cfg.cells_per_eps;
    sc.cells_exponent = cfg.cells_exponent;
    let report = convergence_study(&sc)?;
    let rows: Vec<Option<Vec<f64>>> = report
        .runs
        .iter()
        .map(|r| {
            Some(vec![
                r.eps,
                r.n_r as f64,
                r.n_phi as f64,
                r.dt,
                r.steps as f64,
                r.sup_distance,
                r.sup_profile_error,
                r.terminal_energy,
                if r.failure.is_none() { 1.0 } else { 0.0 },
            ])
        })
        .collect();
    w.table(
        "convergence.dat",
        "zero set vs curvature flow",
        &[
            ("eps", "1"),
            ("n_r", "count"),
            ("n_phi", "count"),
            ("dt", "1"),
            ("steps", "count"),
            ("sup_distance", "1"),
            ("sup_profile_error", "1"),
            ("terminal_energy", "1"),
            ("ok", "bool"),
        ],
        &rows,
    )?;
    let mut rows = Vec::new();
    for r in &report.runs {
        rows.extend(r.snapshots.iter().map(|s| {
            Some(vec![r.eps, s.t, s.distance, s.excursion, s.profile_error, s.energy, s.components as f64])
        }));
        rows.push(None);
    }
    w.table(
        "convergence_snapshots.dat",
        "per-snapshot comparison",
        &[
            ("eps", "1"),
            ("t", "1"),
            ("distance", "1"),
            ("excursion", "1"),
            ("profile_error", "1"),
            ("energy", "1"),
            ("components", "count"),
        ],
        &rows,
    )?;
    w.json("convergence.json", &report)
}
