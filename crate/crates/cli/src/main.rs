use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wgqed_cli::config::{parse_config, Experiment};
use wgqed_cli::run::{derived_lines, execute, write_outputs};
use wgqed_cli::table::echoed_config;
use wgqed_cli::{exit, exit_code};

/// Collective scattering and decay of atoms in a rectangular waveguide.
#[derive(Parser)]
#[command(name = "wgqed", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Population dynamics after a single excitation.
    Dynamics(RunArgs),
    /// Steady-state transmission and polarization profiles.
    Steady(RunArgs),
    /// Collective eigenvalues.
    Spectrum(RunArgs),
    /// Transmission over a list of guide widths (and cloud lengths).
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config, or a result table whose header echoes one.
    #[arg(long, env = "WGQED_CONFIG")]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long, env = "WGQED_SEED")]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo trials (results do not depend on it).
    #[arg(long, env = "WGQED_THREADS")]
    threads: Option<usize>,
    /// Output directory; overrides `output` in the config.
    #[arg(long, env = "WGQED_OUT")]
    out: Option<PathBuf>,
    /// Print the resolved config and derived N or L, then stop.
    #[arg(long)]
    dry_run: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Dynamics(a) => (Experiment::Dynamics, a),
        Command::Steady(a) => (Experiment::Steady, a),
        Command::Spectrum(a) => (Experiment::Spectrum, a),
        Command::Sweep(a) => (Experiment::Sweep, a),
    };
    ExitCode::from(run(experiment, args) as u8)
}

fn run(experiment: Experiment, args: RunArgs) -> i32 {
    let path = args.config.display();
    let raw = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {path}: {e}");
            return exit::CONFIG;
        }
    };
    let text = echoed_config(&raw).unwrap_or(raw);
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid config {path}:");
            for issue in &e.issues {
                eprintln!("  {issue}");
            }
            return exit::CONFIG;
        }
    };
    if cfg.experiment != experiment {
        eprintln!("error: {path} describes a {} run, not {experiment}", cfg.experiment);
        return exit::CONFIG;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output = Some(out.display().to_string());
    }
    let derived = match derived_lines(&cfg) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: invalid config {path}: {e}");
            return exit::CONFIG;
        }
    };
    if args.dry_run {
        print!("{}", cfg.to_toml());
        for line in derived {
            println!("# derived: {line}");
        }
        return exit::OK;
    }
    let outputs = match execute(&cfg, args.threads) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    for o in &outputs {
        for w in o.table.header_values("warning") {
            eprintln!("warning: {w}");
        }
    }
    let dir = PathBuf::from(cfg.output.as_deref().unwrap_or("."));
    match write_outputs(&outputs, &dir) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            exit::OK
        }
        Err(e) => {
            eprintln!("error: writing to {}: {e}", dir.display());
            exit::IO
        }
    }
}
