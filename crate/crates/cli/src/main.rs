//! `paneitz`: spectra, balancing, extremality and ascent experiments for the
//! Paneitz operator on model 4-manifolds.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use paneitz_core::{BackendDescriptor, Error};
use serde_json::json;

mod commands;
mod config;
mod expr;

use config::{ExperimentConfig, FactorSpec, OutputFormat};

const SCHEMA_VERSION: u32 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "paneitz", version, about = "Paneitz operator spectra under conformal deformations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lowest eigenvalues of K v = λ M_w v
    Spectrum(Options),
    /// Möbius balancing of e^{4w} dv on the unit S⁴
    Balance(Options),
    /// Extremality certificate, obstruction flags and sampled derivatives for λ_k
    Extremal(Options),
    /// Volume-constrained ascent of λ_k
    Maximize(Options),
    /// One-sided derivatives of λ_k along --direction
    Derivative(Options),
    /// Identity checks for the chosen backend
    Verify(Options),
}

#[derive(Args, Debug, Clone)]
struct Options {
    /// sphere, torus or s2xs2
    #[arg(long, default_value = "sphere")]
    backend: String,
    /// Harmonic degree cutoff (sphere, s2xs2)
    #[arg(long)]
    max_degree: Option<usize>,
    /// Fourier cutoff per direction (torus)
    #[arg(long)]
    max_freq: Option<usize>,
    /// Sphere radius, or two comma-separated radii for s2xs2
    #[arg(long)]
    radius: Option<String>,
    /// One or four comma-separated torus periods
    #[arg(long)]
    periods: Option<String>,
    /// Conformal factor: JSON coefficient file, `zero`, `random:<mag>` or an expression
    #[arg(long, default_value = "zero")]
    w: String,
    /// Direction α (same forms as --w) for `derivative`
    #[arg(long)]
    direction: Option<String>,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Eigenvalues to compute (`spectrum`) or directions to sample (`extremal`)
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 0.1)]
    step_size: f64,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory to write `<command>.json` / `<command>.csv` into instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    /// Load the full experiment configuration from a JSON file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit
    #[arg(long)]
    print_config: bool,
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad {what} '{text}'"))))
        .collect()
}

fn resolve(command: &str, o: &Options) -> Result<ExperimentConfig, Error> {
    if let Some(path) = &o.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if config.command != command {
            return Err(Error::Config(format!("config is for '{}', not '{command}'", config.command)));
        }
        return Ok(config);
    }
    let (max_degree, params) = match o.backend.as_str() {
        "torus" => {
            if o.max_degree.is_some() || o.radius.is_some() {
                return Err(Error::Config("torus takes --max-freq and --periods".into()));
            }
            let periods = o.periods.as_deref().map(|p| parse_list(p, "periods")).transpose()?.unwrap_or_default();
            (o.max_freq.unwrap_or(1), periods)
        }
        "sphere" | "s2xs2" => {
            if o.max_freq.is_some() || o.periods.is_some() {
                return Err(Error::Config(format!("{} takes --max-degree and --radius", o.backend)));
            }
            let radius = o.radius.as_deref().map(|r| parse_list(r, "radius")).transpose()?.unwrap_or_default();
            (o.max_degree.unwrap_or(2), radius)
        }
        other => return Err(Error::Config(format!("unknown backend '{other}'"))),
    };
    let tolerance = o.tol.unwrap_or(match command {
        "balance" => 1e-8,
        _ => 1e-6,
    });
    Ok(ExperimentConfig {
        command: command.to_string(),
        backend: BackendDescriptor { kind: o.backend.clone(), params, max_degree },
        w: FactorSpec::from_arg(&o.w)?,
        direction: o.direction.as_deref().map(FactorSpec::from_arg).transpose()?,
        k: o.k,
        count: o.count,
        steps: o.steps,
        step_size: o.step_size,
        tolerance,
        seed: o.seed,
        format: o.format,
        out: o.out.clone(),
    })
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Usage(_)
        | Error::UnsupportedBackend(_)
        | Error::Truncation { .. }
        | Error::DirectionNotAdmissible { .. }
        | Error::Parameter(_) => EXIT_CONFIG,
        Error::IllConditionedMass { .. }
        | Error::NonConvergence { .. }
        | Error::HypothesisViolation { .. }
        | Error::InvalidMap { .. }
        | Error::Numerical(_) => EXIT_NUMERICAL,
    }
}

fn render(config: &ExperimentConfig, output: &commands::CommandOutput) -> String {
    let hash = config.hash();
    match config.format {
        OutputFormat::Json => {
            let doc = json!({
                "schema_version": SCHEMA_VERSION,
                "artifact_version": env!("CARGO_PKG_VERSION"),
                "command": config.command,
                "config_hash": hash,
                "seed": config.seed,
                "config": config,
                "result": output.result,
            });
            serde_json::to_string_pretty(&doc).expect("output serializes") + "\n"
        }
        OutputFormat::Csv => format!(
            "# schema_version={SCHEMA_VERSION}\n# artifact_version={}\n# command={}\n# config_hash={hash}\n# seed={}\n{}",
            env!("CARGO_PKG_VERSION"),
            config.command,
            config.seed,
            output.csv
        ),
    }
}

fn execute(command: &str, options: &Options) -> Result<u8, Error> {
    let config = resolve(command, options)?;
    if options.print_config {
        println!("{}", serde_json::to_string_pretty(&config).expect("config serializes"));
        return Ok(0);
    }
    let output = commands::run(&config)?;
    let text = render(&config, &output);
    match &config.out {
        Some(dir) => {
            let ext = match config.format {
                OutputFormat::Json => "json",
                OutputFormat::Csv => "csv",
            };
            std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
            let path = dir.join(format!("{command}.{ext}"));
            std::fs::write(&path, text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(output.exit as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, options) = match &cli.command {
        Command::Spectrum(o) => ("spectrum", o),
        Command::Balance(o) => ("balance", o),
        Command::Extremal(o) => ("extremal", o),
        Command::Maximize(o) => ("maximize", o),
        Command::Derivative(o) => ("derivative", o),
        Command::Verify(o) => ("verify", o),
    };
    match execute(name, options) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
