use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use polarlink::cli::{run, Command, RunManifest};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Transmissive,
    Reflective,
    Heatmap,
    Estimate,
    FrequencySweep,
    PowerSweep,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Transmissive => Command::Transmissive,
            Cmd::Reflective => Command::Reflective,
            Cmd::Heatmap => Command::Heatmap,
            Cmd::Estimate => Command::Estimate,
            Cmd::FrequencySweep => Command::FrequencySweep,
            Cmd::PowerSweep => Command::PowerSweep,
        }
    }
}

/// Polarization-rotating metasurface link simulator.
#[derive(Debug, Parser)]
#[command(name = "polarlink", version)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Noise seed; overrides the scenario's `rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Voltage step of exhaustive sweeps.
    #[arg(long, value_name = "VOLTS")]
    step: Option<f64>,
}

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let args = Args::parse();
    let manifest = RunManifest {
        command: args.command.into(),
        scenario: args.scenario,
        out: args.out,
        seed: args.seed,
        step: args.step,
    };
    match run(&manifest) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            })
        }
    }
}
