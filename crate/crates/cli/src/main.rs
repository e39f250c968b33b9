use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nnspin_cli::pipeline::{analyze_command, Pipeline};
use nnspin_cli::{CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(
    name = "nnspin",
    version,
    about = "Two-neutron spin dynamics on a simulated transmon"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the spin Hamiltonian and its exact eigensystem.
    Hamiltonian(Common),
    /// Optimize a control pulse for the branch selected by `nuclear.power`.
    Pulse(Common),
    /// Simulate repeated gates on the device and the spin-space reference.
    Simulate(Common),
    /// Extract frequencies, and reconstruct eigenvalues when both branches exist.
    Analyze(Common),
    /// Every stage, both branches.
    RunAll(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set simulation.n_steps=128`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Rerun stages even when cached outputs are valid.
    #[arg(long)]
    force: bool,
    /// Output directory (overrides `output_dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for the simulation, the pulse initialization and the fit restarts.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

fn load(c: &Common) -> CliResult<RunConfig> {
    let mut overrides = Vec::new();
    if let Some(s) = c.seed {
        for key in ["simulation.seed", "pulse.rng_seed", "analysis.fit.seed"] {
            overrides.push(format!("{key}={s}"));
        }
    }
    if let Some(out) = &c.out {
        let v = serde_json::Value::String(out.display().to_string());
        overrides.push(format!("output_dir={v}"));
    }
    overrides.extend(c.set.iter().cloned());
    RunConfig::load(c.config.as_deref(), &overrides)
}

fn run(cli: Cli) -> CliResult<()> {
    let (common, cmd) = match &cli.command {
        Command::Hamiltonian(c) => (c, "hamiltonian"),
        Command::Pulse(c) => (c, "pulse"),
        Command::Simulate(c) => (c, "simulate"),
        Command::Analyze(c) => (c, "analyze"),
        Command::RunAll(c) => (c, "run-all"),
    };
    let cfg = load(common)?;
    let mut p = Pipeline::open(&cfg, common.force)?;
    let power = cfg.nuclear.power;
    let result = match cmd {
        "hamiltonian" => p.hamiltonian(),
        "pulse" => p.pulse(power),
        "simulate" => p.simulate(power),
        "analyze" => analyze_command(&mut p),
        _ => p.run_all(),
    };
    for (stage, status) in &p.report {
        println!("stage {stage}: {}", status.as_str());
    }
    result?;
    println!("outputs in {}", cfg.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                if !e.to_string().contains(&s.to_string()) {
                    eprintln!("  caused by: {s}");
                }
                src = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
