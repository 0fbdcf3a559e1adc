//! Flat `key = value` run configuration.
//!
//! A file holds one key per line; `#` starts a comment. Command-line flags
//! (`--key value`, `--key=value` or `--set key=value`) override file keys.
//! Every key is checked against the command: keys the command does not use
//! are rejected just like misspelled ones.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use acflow::potential::BumpShape;

/// Where a value came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Flag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub origin: Origin,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.origin {
            Origin::Line(n) => write!(f, "config line {n}: `{}`: {}", self.key, self.message),
            Origin::Flag => write!(f, "flag --{}: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Command {
    Profile,
    Sigma,
    HalfPlane,
    Mcf,
    Ac,
    Spectrum,
    Converge,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Profile,
        Command::Sigma,
        Command::HalfPlane,
        Command::Mcf,
        Command::Ac,
        Command::Spectrum,
        Command::Converge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Profile => "profile",
            Command::Sigma => "sigma",
            Command::HalfPlane => "halfplane",
            Command::Mcf => "mcf",
            Command::Ac => "ac",
            Command::Spectrum => "spectrum",
            Command::Converge => "converge",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    /// Keys the command reads, besides `cmd`, `out` and `threads`.
    fn keys(self) -> &'static [&'static str] {
        match self {
            Command::Profile => &["potential", "potential_scale", "half_length", "intervals"],
            Command::Sigma => &["potential", "potential_scale", "alpha", "support_margin", "bump_shape", "samples"],
            Command::HalfPlane => &[
                "potential",
                "potential_scale",
                "alpha",
                "support_margin",
                "bump_shape",
                "half_width",
                "height",
                "nodes_r",
                "nodes_h",
                "newton_tol",
            ],
            Command::Mcf => &["alpha", "segments", "bump", "horizon", "dt", "snapshots"],
            Command::Ac => &[
                "potential",
                "potential_scale",
                "alpha",
                "support_margin",
                "bump_shape",
                "eps",
                "horizon",
                "dt",
                "snapshots",
                "segments",
                "bump",
                "delta0",
                "cells_per_eps",
            ],
            Command::Spectrum => &["alpha", "eps", "delta0", "tol", "probes", "seed", "cells_per_eps", "cells_exponent"],
            Command::Converge => &[
                "potential",
                "potential_scale",
                "alpha",
                "support_margin",
                "bump_shape",
                "eps",
                "horizon",
                "dt_factor",
                "dt_exponent",
                "mcf_dt_factor",
                "segments",
                "bump",
                "delta0",
                "cells_per_eps",
                "cells_exponent",
            ],
        }
    }
}

const COMMON: [&str; 3] = ["cmd", "out", "threads"];

fn known(key: &str) -> bool {
    COMMON.contains(&key) || Command::ALL.iter().any(|c| c.keys().contains(&key))
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cmd: Command,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub potential_scale: f64,
    /// Radians.
    pub alpha: f64,
    pub support_margin: f64,
    pub bump_shape: BumpShape,
    pub samples: usize,
    pub half_length: f64,
    pub intervals: usize,
    pub half_width: f64,
    pub height: f64,
    pub nodes_r: usize,
    pub nodes_h: usize,
    pub newton_tol: f64,
    pub segments: usize,
    pub bump: f64,
    pub horizon: f64,
    pub dt: Option<f64>,
    pub snapshots: usize,
    pub eps: Vec<f64>,
    pub delta0: f64,
    pub cells_per_eps: f64,
    pub cells_exponent: f64,
    pub tol: f64,
    pub probes: usize,
    pub seed: u64,
    pub dt_factor: f64,
    pub dt_exponent: f64,
    pub mcf_dt_factor: f64,
}

impl RunConfig {
    pub fn defaults(cmd: Command) -> Self {
        let (eps, delta0, cells_exponent) = match cmd {
            Command::Spectrum => (vec![0.1, 0.05, 0.025], acflow::spectrum::DEFAULT_DELTA0, 0.5),
            Command::Converge => (vec![0.08, 0.04, 0.02], acflow::harness::DEFAULT_DELTA0, 0.5),
            _ => (vec![0.05], acflow::harness::DEFAULT_DELTA0, 0.0),
        };
        Self {
            cmd,
            out: None,
            threads: None,
            potential_scale: 1.0,
            alpha: PI / 2.0,
            support_margin: acflow::potential::DEFAULT_SUPPORT_MARGIN,
            bump_shape: BumpShape::Exponential,
            samples: 401,
            half_length: acflow::profile::DEFAULT_HALF_LENGTH,
            intervals: acflow::profile::DEFAULT_INTERVALS,
            half_width: 10.0,
            height: 10.0,
            nodes_r: 401,
            nodes_h: 201,
            newton_tol: acflow::halfplane::DEFAULT_NEWTON_TOL,
            segments: acflow::mcf::DEFAULT_SEGMENTS,
            bump: 0.05,
            horizon: 0.05,
            dt: None,
            snapshots: 10,
            eps,
            delta0,
            cells_per_eps: 6.0,
            cells_exponent,
            tol: acflow::spectrum::DEFAULT_TOL,
            probes: acflow::spectrum::DEFAULT_PROBES,
            seed: acflow::spectrum::DEFAULT_SEED,
            dt_factor: acflow::acsolver::DEFAULT_DT_FACTOR,
            dt_exponent: 1.0,
            mcf_dt_factor: acflow::mcf::DEFAULT_DT_FACTOR,
        }
    }

    /// Parses `text`, applies `overrides` and checks the result. `cmd`
    /// must be given either as the subcommand or as a `cmd` key, and the
    /// two must agree.
    pub fn build(cmd: Option<Command>, text: Option<&str>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut entries: Vec<(Origin, String, String)> = Vec::new();
        if let Some(text) = text {
            entries.extend(parse_lines(text)?.into_iter().map(|(n, k, v)| (Origin::Line(n), k, v)));
        }
        entries.extend(overrides.iter().map(|(k, v)| (Origin::Flag, k.clone(), v.clone())));

        let mut file_cmd: Option<(Origin, Command)> = None;
        for (origin, key, value) in &entries {
            if !known(key) {
                return Err(err(origin, key, "unknown key"));
            }
            if key == "cmd" {
                let c = Command::parse(value).ok_or_else(|| {
                    err(origin, key, &format!("unknown command `{value}`; expected one of {}", command_list()))
                })?;
                file_cmd = Some((origin.clone(), c));
            }
        }
        let cmd = match (cmd, file_cmd) {
            (Some(a), Some((origin, b))) if a != b => {
                return Err(err(&origin, "cmd", &format!("`{}` conflicts with subcommand `{}`", b.name(), a.name())))
            }
            (Some(a), _) => a,
            (None, Some((_, b))) => b,
            (None, None) => {
                return Err(ConfigError {
                    origin: Origin::Flag,
                    key: "cmd".into(),
                    message: format!("no command given; expected one of {}", command_list()),
                })
            }
        };
        let mut cfg = Self::defaults(cmd);
        for (origin, key, value) in &entries {
            if key == "cmd" {
                continue;
            }
            if !COMMON.contains(&key.as_str()) && !cmd.keys().contains(&key.as_str()) {
                return Err(err(origin, key, &format!("not used by `{}`", cmd.name())));
            }
            cfg.set(key, value).map_err(|m| err(origin, key, &m))?;
        }
        cfg.check().map_err(|(key, m)| {
            let origin = entries.iter().rev().find(|e| e.1 == key).map_or(Origin::Flag, |e| e.0.clone());
            err(&origin, key, &m)
        })?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "out" => self.out = Some(PathBuf::from(v)),
            "threads" => self.threads = Some(positive_count(v)?),
            "potential" => {
                if v != "quartic" {
                    return Err(format!("unknown potential `{v}`; supported: quartic"));
                }
            }
            "potential_scale" => self.potential_scale = positive(v)?,
            "alpha" => self.alpha = parse_angle(v)?,
            "support_margin" => self.support_margin = open_unit(v)?,
            "bump_shape" => {
                self.bump_shape = match v {
                    "exponential" => BumpShape::Exponential,
                    "polynomial" => BumpShape::Polynomial,
                    _ => return Err(format!("unknown bump shape `{v}`; expected exponential or polynomial")),
                }
            }
            "samples" => self.samples = count_at_least(v, 2)?,
            "half_length" => self.half_length = positive(v)?,
            "intervals" => self.intervals = count_at_least(v, 2)?,
            "half_width" => self.half_width = positive(v)?,
            "height" => self.height = positive(v)?,
            "nodes_r" => self.nodes_r = count_at_least(v, 3)?,
            "nodes_h" => self.nodes_h = count_at_least(v, 3)?,
            "newton_tol" => self.newton_tol = positive(v)?,
            "segments" => self.segments = count_at_least(v, 2)?,
            "bump" => self.bump = finite(v)?,
            "horizon" => self.horizon = positive(v)?,
            "dt" => self.dt = Some(positive(v)?),
            "snapshots" => self.snapshots = positive_count(v)?,
            "eps" => self.eps = parse_eps(v)?,
            "delta0" => self.delta0 = positive(v)?,
            "cells_per_eps" => self.cells_per_eps = positive(v)?,
            "cells_exponent" => self.cells_exponent = nonnegative(v)?,
            "tol" => self.tol = positive(v)?,
            "probes" => self.probes = positive_count(v)?,
            "seed" => self.seed = v.parse().map_err(|_| format!("expected an unsigned integer, got `{v}`"))?,
            "dt_factor" => self.dt_factor = positive(v)?,
            "dt_exponent" => self.dt_exponent = nonnegative(v)?,
            "mcf_dt_factor" => self.mcf_dt_factor = positive(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Cross-key constraints; returns the offending key.
    fn check(&self) -> Result<(), (&'static str, String)> {
        match self.cmd {
            Command::Ac if self.eps.len() != 1 => {
                Err(("eps", format!("ac takes a single ε, got {}", self.eps.len())))
            }
            Command::Spectrum | Command::Converge if self.eps.windows(2).any(|w| w[1] >= w[0]) => {
                Err(("eps", "ε values must be strictly decreasing".into()))
            }
            Command::Converge if self.eps.len() < 3 => {
                Err(("eps", format!("converge needs at least 3 values of ε, got {}", self.eps.len())))
            }
            Command::Profile if self.intervals % 2 == 1 => {
                Err(("intervals", "must be even so that z = 0 is a grid node".into()))
            }
            _ => Ok(()),
        }
    }

    /// Every key the command reads with its resolved value, in a form
    /// [`RunConfig::build`] reads back to the same configuration.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("cmd".to_string(), self.cmd.name().to_string());
        for &key in self.cmd.keys() {
            let v = match key {
                "potential" => "quartic".to_string(),
                "potential_scale" => num(self.potential_scale),
                "alpha" => num(self.alpha),
                "support_margin" => num(self.support_margin),
                "bump_shape" => match self.bump_shape {
                    BumpShape::Exponential => "exponential".into(),
                    BumpShape::Polynomial => "polynomial".into(),
                },
                "samples" => self.samples.to_string(),
                "half_length" => num(self.half_length),
                "intervals" => self.intervals.to_string(),
                "half_width" => num(self.half_width),
                "height" => num(self.height),
                "nodes_r" => self.nodes_r.to_string(),
                "nodes_h" => self.nodes_h.to_string(),
                "newton_tol" => num(self.newton_tol),
                "segments" => self.segments.to_string(),
                "bump" => num(self.bump),
                "horizon" => num(self.horizon),
                "dt" => match self.dt {
                    Some(dt) => num(dt),
                    None => continue,
                },
                "snapshots" => self.snapshots.to_string(),
                "eps" => format!("[{}]", self.eps.iter().map(|&e| num(e)).collect::<Vec<_>>().join(",")),
                "delta0" => num(self.delta0),
                "cells_per_eps" => num(self.cells_per_eps),
                "cells_exponent" => num(self.cells_exponent),
                "tol" => num(self.tol),
                "probes" => self.probes.to_string(),
                "seed" => self.seed.to_string(),
                "dt_factor" => num(self.dt_factor),
                "dt_exponent" => num(self.dt_exponent),
                "mcf_dt_factor" => num(self.mcf_dt_factor),
                _ => unreachable!("key table and echo out of sync: {key}"),
            };
            m.insert(key.to_string(), v);
        }
        m
    }

    /// The echo as config-file text.
    pub fn to_text(&self) -> String {
        self.echo().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn err(origin: &Origin, key: &str, message: &str) -> ConfigError {
    ConfigError { origin: origin.clone(), key: key.to_string(), message: message.to_string() }
}

fn command_list() -> String {
    Command::ALL.iter().map(|c| c.name()).collect::<Vec<_>>().join(" | ")
}

/// Shortest representation that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

/// `(line, key, value)` for every non-blank line.
pub fn parse_lines(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError {
                origin: Origin::Line(i + 1),
                key: line.to_string(),
                message: "expected `key = value`".into(),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(ConfigError {
                origin: Origin::Line(i + 1),
                key: k.to_string(),
                message: "empty key or value".into(),
            });
        }
        out.push((i + 1, k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn finite(v: &str) -> Result<f64, String> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("expected a finite number, got `{v}`")),
    }
}

fn positive(v: &str) -> Result<f64, String> {
    let x = finite(v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("must be positive, got {x}"))
    }
}

fn nonnegative(v: &str) -> Result<f64, String> {
    let x = finite(v)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("must be non-negative, got {x}"))
    }
}

fn open_unit(v: &str) -> Result<f64, String> {
    let x = finite(v)?;
    if x > 0.0 && x < 1.0 {
        Ok(x)
    } else {
        Err(format!("must lie in (0, 1), got {x}"))
    }
}

fn count_at_least(v: &str, min: usize) -> Result<usize, String> {
    match v.parse::<usize>() {
        Ok(n) if n >= min => Ok(n),
        Ok(n) => Err(format!("must be at least {min}, got {n}")),
        Err(_) => Err(format!("expected a non-negative integer, got `{v}`")),
    }
}

fn positive_count(v: &str) -> Result<usize, String> {
    count_at_least(v, 1)
}

/// Angle in radians; a `deg` or `°` suffix marks degrees, a bare number or
/// a `rad` suffix radians. Must lie in `(0, π)`.
pub fn parse_angle(v: &str) -> Result<f64, String> {
    let s = v.trim();
    let (body, degrees) = if let Some(b) = s.strip_suffix("deg").or_else(|| s.strip_suffix('°')) {
        (b, true)
    } else {
        (s.strip_suffix("rad").unwrap_or(s), false)
    };
    let x = finite(body.trim())?;
    let rad = if degrees { x.to_radians() } else { x };
    if rad > 0.0 && rad < PI {
        Ok(rad)
    } else if degrees {
        Err(format!("contact angle {x}° outside (0°, 180°)"))
    } else {
        Err(format!("contact angle {x} rad outside (0, π); use a `deg` suffix for degrees"))
    }
}

/// `[a,b,c]`, `a,b,c` or a single value; order is kept.
pub fn parse_eps(v: &str) -> Result<Vec<f64>, String> {
    let body = v.trim().trim_start_matches('[').trim_end_matches(']');
    let eps: Vec<f64> = body.split(',').map(|s| finite(s.trim())).collect::<Result<_, _>>()?;
    if eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err("ε values must lie in (0, 1)".into());
    }
    Ok(eps)
}
