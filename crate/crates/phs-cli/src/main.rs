//! `phs` — discretization, stability-certification and LQ-control toolkit
//! for 1D boundary-damped port-Hamiltonian systems.
//!
//! Commands: `verify`, `stability`, `lqr`, `simulate`, `sweep`. Exit code 0
//! iff every contract of the command holds; failures print a
//! machine-readable error record on stderr.

mod commands;
mod config;
mod expr;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "phs", version, about = "port-Hamiltonian discretization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file (defaults to the wave preset).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts (overrides config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated ascending mesh sizes, e.g. 10,20,40 (overrides config).
    #[arg(long, global = true)]
    n_list: Option<String>,
    /// Discretization scheme: mfem | fem (overrides config).
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// RNG seed for the verification suite (overrides config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated artifact formats: csv,svg (overrides config).
    #[arg(long, global = true)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the independent verification (oracle) suite.
    Verify,
    /// Certify stability and sweep the spectral abscissa over mesh sizes.
    Stability,
    /// LQ gain design and gain-profile convergence study.
    Lqr,
    /// Integrate the free system and check energy/multiplier traces.
    Simulate,
    /// Open/closed-loop abscissa table for both schemes.
    Sweep,
}

fn apply_overrides(cfg: &mut RunConfig, cli: &Cli) -> Result<()> {
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(list) = &cli.n_list {
        let parsed: Vec<usize> = list
            .split(',')
            .map(|t| t.trim().parse().with_context(|| format!("bad n-list entry `{t}`")))
            .collect::<Result<_>>()?;
        anyhow::ensure!(
            !parsed.is_empty() && parsed.windows(2).all(|w| w[0] < w[1]),
            "--n-list must be nonempty and strictly ascending"
        );
        cfg.n_list = parsed;
    }
    if let Some(scheme) = &cli.scheme {
        cfg.scheme = config::parse_scheme(scheme)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(fmt) = &cli.format {
        cfg.emit_csv = false;
        cfg.emit_svg = false;
        for f in fmt.split(',') {
            match f.trim() {
                "csv" => cfg.emit_csv = true,
                "svg" => cfg.emit_svg = true,
                other => anyhow::bail!("unknown format `{other}`"),
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<i32> {
    // PHS_THREADS caps internal parallelism (best effort: the global pool
    // can only be configured once per process).
    if let Ok(t) = std::env::var("PHS_THREADS") {
        let threads: usize = t.parse().context("PHS_THREADS must be a positive integer")?;
        anyhow::ensure!(threads >= 1, "PHS_THREADS must be >= 1");
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?,
        None => String::new(),
    };
    let mut cfg = config::parse_config(&text)?;
    apply_overrides(&mut cfg, cli)?;
    println!(
        "system = {}, scheme = {}, n_list = {:?}, seed = {}, artifacts -> {} (id {})",
        cfg.system_name,
        cfg.scheme.as_str(),
        cfg.n_list,
        cfg.seed,
        cfg.out_dir.display(),
        cfg.hash
    );
    match cli.command {
        Command::Verify => commands::cmd_verify(&cfg),
        Command::Stability => commands::cmd_stability(&cfg),
        Command::Lqr => commands::cmd_lqr(&cfg),
        Command::Simulate => commands::cmd_simulate(&cfg),
        Command::Sweep => commands::cmd_sweep(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => {
            eprintln!("{{\"error\":\"contract violation\",\"exit\":{code}}}");
            ExitCode::from(code as u8)
        }
        Err(err) => {
            let msg = format!("{err:#}").replace('\\', "\\\\").replace('"', "\\\"");
            eprintln!("{{\"error\":\"{msg}\",\"exit\":2}}");
            ExitCode::from(2)
        }
    }
}
