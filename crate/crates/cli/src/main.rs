use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use tq::commands::{self, exit_code};
use tq::config::{parse_config, JobConfig};

#[derive(Parser)]
#[command(name = "tq", about = "Quantization of integrable systems in action-angle variables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct JobArgs {
    /// JSON job configuration (strict: unknown keys are rejected)
    #[arg(long)]
    config: PathBuf,
    /// Directory for artifact files
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seed for randomized suites (overrides the config value)
    #[arg(long)]
    seed: Option<u64>,
    /// Output format: csv or json (overrides the config value)
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct CheckArgs {
    /// Optional JSON configuration; `check` runs the default suites without one
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues of the quantized Hamiltonian on the truncation window
    Spectrum(JobArgs),
    /// Phase evolution of a wavefunction under a diagonal Hamiltonian
    Evolve(JobArgs),
    /// Path-ordered holonomy operator of a parameter-driven perturbation
    Holonomy(JobArgs),
    /// Classical reference trajectory by fixed-step RK4
    #[command(name = "classical-flow")]
    ClassicalFlow(JobArgs),
    /// 1-DOF action integral over a closed orbit
    Action(JobArgs),
    /// Seeded invariant suites with a deterministic report
    Check(CheckArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Evolve(_) => "evolve",
            Command::Holonomy(_) => "holonomy",
            Command::ClassicalFlow(_) => "classical-flow",
            Command::Action(_) => "action",
            Command::Check(_) => "check",
        }
    }
}

fn validate_threads_env() -> Result<(), String> {
    match std::env::var("TQ_THREADS") {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(()),
            _ => Err(format!("TQ_THREADS: expected a positive integer, got '{v}'")),
        },
        Err(_) => Ok(()),
    }
}

fn load_config(file: &Path, expected_command: &str) -> Result<JobConfig, String> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| format!("cannot read {}: {e}", file.display()))?;
    let cfg = parse_config(&text).map_err(|e| e.to_string())?;
    if cfg.command != expected_command {
        return Err(format!(
            "config.command '{}' does not match the '{expected_command}' subcommand",
            cfg.command
        ));
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let started = Instant::now();
    let cli = Cli::parse();
    if let Err(msg) = validate_threads_env() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }

    let name = cli.command.name();
    let (cfg, config_dir, out, seed, format) = match &cli.command {
        Command::Spectrum(a)
        | Command::Evolve(a)
        | Command::Holonomy(a)
        | Command::ClassicalFlow(a)
        | Command::Action(a) => {
            let cfg = match load_config(&a.config, name) {
                Ok(c) => c,
                Err(msg) => {
                    eprintln!("error: {msg}");
                    return ExitCode::from(2);
                }
            };
            let dir = a
                .config
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."));
            let seed = a.seed.or(cfg.seed).unwrap_or(0);
            let format = a
                .format
                .clone()
                .or_else(|| cfg.format.clone())
                .unwrap_or_else(|| "csv".to_string());
            (cfg, dir, a.out.clone(), seed, format)
        }
        Command::Check(a) => {
            let cfg = match &a.config {
                Some(file) => match load_config(file, "check") {
                    Ok(c) => c,
                    Err(msg) => {
                        eprintln!("error: {msg}");
                        return ExitCode::from(2);
                    }
                },
                None => parse_config(r#"{"command":"check"}"#).unwrap(),
            };
            let seed = a.seed.or(cfg.seed).unwrap_or(42);
            let format = a
                .format
                .clone()
                .or_else(|| cfg.format.clone())
                .unwrap_or_else(|| "json".to_string());
            (cfg, PathBuf::from("."), a.out.clone(), seed, format)
        }
    };

    if format != "csv" && format != "json" {
        eprintln!("error: --format: expected 'csv' or 'json', got '{format}'");
        return ExitCode::from(2);
    }

    let code = match commands::run(&cfg, &config_dir, &out, seed, &format) {
        Ok(report) => {
            println!("{}", report.to_json());
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    };
    eprintln!("wall time: {:.3}s", started.elapsed().as_secs_f64());
    code
}
