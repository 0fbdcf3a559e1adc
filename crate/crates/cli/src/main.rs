//! `acflow` command-line front end.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde_json::json;

use config::{Command, RunConfig};
use run::{RunError, Writer};

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "ACFLOW_OUT";
const DEFAULT_OUT: &str = "acflow-out";

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Profile,
    Sigma,
    Halfplane,
    Mcf,
    Ac,
    Spectrum,
    Converge,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Profile => Command::Profile,
            Cmd::Sigma => Command::Sigma,
            Cmd::Halfplane => Command::HalfPlane,
            Cmd::Mcf => Command::Mcf,
            Cmd::Ac => Command::Ac,
            Cmd::Spectrum => Command::Spectrum,
            Cmd::Converge => Command::Converge,
        }
    }
}

/// Allen–Cahn with a contact-angle boundary condition and its
/// curvature-flow limit.
///
/// Any config key can also be passed as `--key value`, `--key=value` or
/// `--set key=value`; flags override the config file. Keys: cmd, out,
/// threads, potential, potential_scale, alpha (radians, or with a `deg`
/// suffix), eps (`[a,b,c]`), support_margin, bump_shape, samples,
/// half_length, intervals, half_width, height, nodes_r, nodes_h,
/// newton_tol, segments, bump, horizon, dt, snapshots, delta0,
/// cells_per_eps, cells_exponent, tol, probes, seed, dt_factor,
/// dt_exponent, mcf_dt_factor.
#[derive(Debug, Parser)]
#[command(name = "acflow", version)]
struct Cli {
    /// Command to run; may instead come from a `cmd` key in the config file.
    #[arg(value_enum)]
    command: Option<Cmd>,

    /// `key = value` config file.
    #[arg(long, short)]
    config: Option<PathBuf>,

    /// Output directory [default: $ACFLOW_OUT, else ./acflow-out].
    #[arg(long, short)]
    out: Option<PathBuf>,

    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,

    /// Key override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

/// Long options clap handles itself; every other `--key` is a config key.
const OWN_FLAGS: [&str; 6] = ["config", "out", "threads", "set", "help", "version"];

/// Splits `args` into clap arguments and `--key value` config overrides.
fn split_args(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), String> {
    let mut own = Vec::new();
    let mut keys = Vec::new();
    let mut it = args.into_iter();
    own.extend(it.next());
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--").filter(|b| !b.is_empty()) else {
            own.push(a);
            continue;
        };
        let (name, inline) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if OWN_FLAGS.contains(&name.as_str()) {
            own.push(a);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| format!("flag --{name} needs a value"))?,
        };
        keys.push((name, value));
    }
    Ok((own, keys))
}

fn overrides(cli: &Cli, keys: Vec<(String, String)>) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for s in &cli.set {
        let (k, v) = s.split_once('=').ok_or_else(|| format!("--set expects key=value, got `{s}`"))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    out.extend(keys);
    if let Some(o) = &cli.out {
        out.push(("out".into(), o.display().to_string()));
    }
    if let Some(t) = cli.threads {
        out.push(("threads".into(), t.to_string()));
    }
    Ok(out)
}

fn main() -> ExitCode {
    let (args, keys) = match split_args(std::env::args().collect()) {
        Ok(x) => x,
        Err(msg) => {
            eprintln!("acflow: {msg}");
            return ExitCode::from(1);
        }
    };
    let cli = Cli::parse_from(args);
    let cfg = match build(&cli, keys) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("acflow: {msg}");
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("acflow: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let dir = cfg
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    let start = Instant::now();
    let mut writer = match Writer::new(&dir) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("acflow: {e}");
            return ExitCode::from(1);
        }
    };
    let result = writer.file("run.cfg", &cfg.to_text()).and_then(|_| run::run(&cfg, &mut writer));
    let (status, error, code) = match &result {
        Ok(()) => ("ok", None, 0),
        Err(e) => (e.kind(), Some(e.to_string()), e.exit_code()),
    };
    let manifest = json!({
        "command": cfg.cmd.name(),
        "config": cfg.echo(),
        "versions": {
            "acflow": acflow::VERSION,
            "acflow-cli": env!("CARGO_PKG_VERSION"),
        },
        "threads": rayon::current_num_threads(),
        "outputs": writer.written,
        "status": status,
        "error": error,
        "wall_seconds": start.elapsed().as_secs_f64(),
    });
    if let Err(e) = writer.json("manifest.json", &manifest) {
        eprintln!("acflow: {e}");
        return ExitCode::from(1);
    }
    match result {
        Ok(()) => {
            println!("{}: wrote {} files to {}", cfg.cmd.name(), writer.written.len(), dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            report(&e);
            ExitCode::from(code as u8)
        }
    }
}

fn build(cli: &Cli, keys: Vec<(String, String)>) -> Result<RunConfig, String> {
    let text = match &cli.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?),
        None => None,
    };
    let ov = overrides(cli, keys)?;
    RunConfig::build(cli.command.map(Command::from), text.as_deref(), &ov).map_err(|e| e.to_string())
}

fn report(e: &RunError) {
    eprintln!("acflow: {}: {e}", e.kind());
}
