use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mdi_decoy::cli::{cmd_optimize, cmd_scan, cmd_verify};
use mdi_decoy::config::RunConfig;
use mdi_decoy::Error;

/// Certified decoy-state MDI-QKD key rates for sources with
/// photon-number-space errors.
#[derive(Parser)]
#[command(name = "mdi-decoy", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimized key rate and certified bounds per (distance, delta) cell (CSV).
    Scan(RunArgs),
    /// Soundness battery: certified bounds against the exact oracle.
    Verify(RunArgs),
    /// Signal-intensity optimization only (CSV).
    Optimize(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file (CSV for scan/optimize, text report for verify).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

// Exit codes: 0 ok, 1 config error, 2 verification failure, 3 infeasible
// bounds.
fn exit_for(e: &Error) -> u8 {
    match e {
        Error::ConditionViolated { .. }
        | Error::SigmaGate { .. }
        | Error::DenominatorNotPositive { .. }
        | Error::NoAdmissibleSignal
        | Error::YieldBoundVanished
        | Error::QberUndefined => 3,
        _ => 1,
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Error> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Io(format!("{}: {e}", args.config.display())))?;
    let mut cfg = RunConfig::from_toml(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8, Error> {
    let args = match &cli.command {
        Command::Scan(a) | Command::Verify(a) | Command::Optimize(a) => a,
    };
    let cfg = load_config(args)?;
    let file = fs::File::create(&args.out)
        .map_err(|e| Error::Io(format!("{}: {e}", args.out.display())))?;
    let mut out = BufWriter::new(file);
    let status = match &cli.command {
        Command::Scan(_) => {
            cmd_scan(&cfg, &mut out)?;
            0
        }
        Command::Optimize(_) => {
            cmd_optimize(&cfg, &mut out)?;
            0
        }
        Command::Verify(_) => {
            let report = cmd_verify(&cfg, &mut out)?;
            if report.ok() {
                println!("verification PASS ({} scenarios)", report.scenarios_run);
                0
            } else {
                println!("verification FAIL ({} scenarios)", report.scenarios_run);
                2
            }
        }
    };
    out.flush()
        .map_err(|e| Error::Io(format!("{}: {e}", args.out.display())))?;
    println!("wrote {}", args.out.display());
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
