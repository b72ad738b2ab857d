//! `kgprop`: batch front-end for the lattice Klein-Gordon laboratory.
//!
//! Exit codes: 0 success, 1 internal error or failed verification,
//! 2 configuration error, 3 violated positivity assumptions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use kgprop::evolution::Sampling;

use commands::{Ctx, Failure};
use config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Operator matrices and positivity diagnostics.
    Assemble,
    /// The evolution matrix over the configured window.
    Evolve,
    /// Propagator kernels on the requested time grids.
    Propagate,
    /// The verification suite.
    Verify,
    /// Eigenvalues of `L` and of the symmetrised generator.
    Spectrum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Debug, Parser)]
#[command(name = "kgprop", version, about = "Klein-Gordon propagators on a periodic 1+1 lattice")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`, default `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Evolution steps; also the verification grid size unless configured.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    sampling: Option<Sampling>,
    #[arg(long, value_enum)]
    richardson: Option<OnOff>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(&cli.config).map_err(|e| Failure::config(format!("[config] {e}")))?;
    if let Some(s) = cli.seed {
        cfg.rng.seed = s;
    }
    if let Some(n) = cli.steps {
        cfg.evolution.steps = n;
    }
    if let Some(s) = cli.sampling {
        cfg.evolution.sampling = s;
    }
    if let Some(r) = cli.richardson {
        cfg.evolution.richardson = r == OnOff::On;
    }
    if cfg.evolution.steps == 0 {
        return Err(Failure::config("[config] evolution.steps must be positive"));
    }
    let out = cli.out.or_else(|| cfg.output.dir.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    let mut ctx = Ctx::new(cfg, out)?;
    match cli.command {
        Command::Assemble => commands::assemble(&mut ctx),
        Command::Evolve => commands::evolve_cmd(&mut ctx),
        Command::Propagate => commands::propagate(&mut ctx),
        Command::Verify => commands::verify(&mut ctx),
        Command::Spectrum => commands::spectrum(&mut ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("kgprop: error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
