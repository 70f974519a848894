//! `psinull` command line.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration error.

mod config;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use config::{ConfigArgs, ModeChoice, RunConfig};
use psinull::dense::{DenseMaps, MapCaps};
use psinull::family::{validate, DEMO_NAMES};
use psinull::measure::{decay_report, t_grid};
use psinull::numeric::parse_rational;
use psinull::psi::psi_truncated;
use psinull::slice::{covering_certificate, select_k, CertifyOptions, Mode};
use psinull::{Error, FactorialDigits};
use serde::Serialize;
use sha2::{Digest, Sha256};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "psinull", version, about = "Universal parameter functions and null covers of surface families")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Factorial digits of a rational point of (0,1]^p
    Expand {
        /// One rational per component, e.g. `1/2 3/7`
        #[arg(required = true)]
        value: Vec<String>,
        /// Digits y_n are printed for n < depth
        #[arg(long, default_value_t = 12)]
        depth: usize,
    },
    /// Exact truncation psi^(N) at a rational point
    Psi {
        #[arg(required = true)]
        value: Vec<String>,
        #[arg(long = "n", short = 'n')]
        n: usize,
        /// Output dimension
        #[arg(long, default_value_t = 1)]
        q: usize,
    },
    /// Check Jacobians, rank and declared bounds of a family
    Validate(ConfigArgs),
    /// Covering certificate for one slice
    Certify(ConfigArgs),
    /// Decay table of cell-cover estimates
    Measure {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Summary of the built-in families at the configured eps
    Demo(ConfigArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Usage(String),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_)
            | Error::Parse(_)
            | Error::InvalidFamily(_)
            | Error::OutOfRange { .. }
            | Error::DimensionMismatch { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Verification(e.to_string()),
        }
    }
}

type Outcome = Result<bool, Failure>;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'a str,
    command: &'a str,
    config_hash: String,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a RunConfig>,
    result: T,
}

fn emit(cfg: Option<&RunConfig>, text: &str) -> Result<(), Failure> {
    match cfg.and_then(|c| c.output.as_ref()) {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Usage(format!("writing {}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| Failure::Usage(e.to_string()))
        }
    }
}

fn emit_json<T: Serialize>(command: &str, cfg: &RunConfig, result: T) -> Result<(), Failure> {
    let env = Envelope { version: VERSION, command, config_hash: cfg.hash(), seed: cfg.seed, config: Some(cfg), result };
    let mut text = serde_json::to_string_pretty(&env).map_err(|e| Failure::Usage(e.to_string()))?;
    text.push('\n');
    emit(Some(cfg), &text)
}

fn parse_point(value: &[String]) -> Result<Vec<psinull::numeric::Rational>, Failure> {
    value.iter().map(|v| parse_rational(v).map_err(Failure::from)).collect()
}

fn expand(value: &[String], depth: usize) -> Outcome {
    let point = parse_point(value)?;
    if depth < 3 {
        return Err(Failure::Usage(format!("depth {depth} prints no digits; use at least 3")));
    }
    let digits = FactorialDigits::expand(&point, depth - 1)?;
    emit(None, &format!("{digits}\n"))?;
    Ok(true)
}

fn psi(value: &[String], n: usize, q: usize) -> Outcome {
    let point = parse_point(value)?;
    if q == 0 {
        return Err(Failure::Usage("q must be positive".into()));
    }
    if n < 3 {
        return Err(Failure::Usage(format!("N = {n} < 3")));
    }
    let y = FactorialDigits::expand(&point, n - 1)?;
    let maps = DenseMaps::new(point.len(), q);
    let trunc = psi_truncated(&maps, &y, n)?;
    let key = format!("psi {} n={n} q={q}", value.join(" "));
    let env = Envelope {
        version: VERSION,
        command: "psi",
        config_hash: hex::encode(Sha256::digest(key.as_bytes())),
        seed: 0,
        config: None,
        result: trunc,
    };
    let mut text = serde_json::to_string_pretty(&env).map_err(|e| Failure::Usage(e.to_string()))?;
    text.push('\n');
    emit(None, &text)?;
    Ok(true)
}

fn run_validate(args: &ConfigArgs) -> Outcome {
    let cfg = args.resolve().map_err(Failure::Usage)?;
    let spec = cfg.family_spec().map_err(Failure::Usage)?;
    let report = validate(&spec);
    let ok = report.passed();
    emit_json("validate", &cfg, report)?;
    Ok(ok)
}

fn maps_for(cfg: &RunConfig, p: usize, q: usize) -> DenseMaps {
    match cfg.mode {
        ModeChoice::Bounded => DenseMaps::with_caps(p, q, MapCaps { tuple_cap: 0, digit_cap: 0 }),
        _ => DenseMaps::new(p, q),
    }
}

fn certify(args: &ConfigArgs) -> Outcome {
    let cfg = args.resolve().map_err(Failure::Usage)?;
    let spec = cfg.family_spec().map_err(Failure::Usage)?;
    let maps = maps_for(&cfg, spec.dims.p, spec.dims.q);
    let opts = CertifyOptions { suffixes: cfg.suffixes, seed: cfg.seed, exec: cfg.exec(), ..Default::default() };
    let cert = covering_certificate(&spec, &maps, cfg.eps, &cfg.t, &opts)?;
    if cfg.mode == ModeChoice::Exact && cert.mode == Mode::Bounded {
        return Err(Failure::Verification(format!(
            "exact mode infeasible at k = {}: the map count exceeds the exact caps",
            cert.k
        )));
    }
    let ok = cert.verified;
    emit_json("certify", &cfg, cert)?;
    Ok(ok)
}

fn measure(args: &ConfigArgs, format: Format) -> Outcome {
    let cfg = args.resolve().map_err(Failure::Usage)?;
    let spec = cfg.family_spec().map_err(Failure::Usage)?;
    let maps = DenseMaps::new(spec.dims.p, spec.dims.q);
    let ts = if cfg.t_samples == 1 { vec![cfg.t.clone()] } else { t_grid(&spec, cfg.t_samples) };
    let mut report = decay_report(&spec, &maps, &cfg.truncations, cfg.delta, cfg.samples, cfg.seed, &ts, cfg.exec())?;
    let opts = CertifyOptions { suffixes: cfg.suffixes, seed: cfg.seed, exec: cfg.exec(), ..Default::default() };
    // no admissible level just leaves the column empty
    if let Ok(cert) = covering_certificate(&spec, &maps, cfg.eps, &cfg.t, &opts) {
        report.attach_certificate(&cert);
    }
    match format {
        Format::Csv => {
            let text = format!("# psinull {VERSION} config={} seed={}\n{}", cfg.hash(), cfg.seed, report.to_csv());
            emit(Some(&cfg), &text)?;
        }
        Format::Json => emit_json("measure", &cfg, report)?,
    }
    Ok(true)
}

#[derive(Serialize)]
struct DemoRow {
    family: String,
    dims: psinull::family::Dims,
    bounds: psinull::family::FamilyBounds,
    validated: bool,
    min_singular_value: f64,
    eps: f64,
    k: Option<u64>,
    note: Option<String>,
}

fn run_demo(args: &ConfigArgs) -> Outcome {
    let cfg = args.resolve().map_err(Failure::Usage)?;
    let mut rows = Vec::new();
    for name in DEMO_NAMES {
        let mut c = cfg.clone();
        c.family = name.to_string();
        let spec = c.family_spec().map_err(Failure::Usage)?;
        let report = validate(&spec);
        let (k, note) = match select_k(&spec, cfg.eps) {
            Ok(k) => (Some(k), None),
            Err(e) => (None, Some(e.to_string())),
        };
        rows.push(DemoRow {
            family: spec.name.clone(),
            dims: spec.dims,
            bounds: spec.bounds,
            validated: report.passed(),
            min_singular_value: report.min_singular_value,
            eps: cfg.eps,
            k,
            note,
        });
    }
    let ok = rows.iter().all(|r| r.validated);
    emit_json("demo", &cfg, rows)?;
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Expand { value, depth } => expand(value, *depth),
        Command::Psi { value, n, q } => psi(value, *n, *q),
        Command::Validate(args) => run_validate(args),
        Command::Certify(args) => certify(args),
        Command::Measure { args, format } => measure(args, *format),
        Command::Demo(args) => run_demo(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Verification(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
