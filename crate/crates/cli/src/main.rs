use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pe3d_cli::run::{configure_threads, CliError, CliResult};
use pe3d_cli::{parse_config, run, Command, RunConfig};

/// Primitive-equations simulator and experiment harness.
#[derive(Parser)]
#[command(name = "pe3d", version)]
struct Cli {
    /// TOML configuration file; defaults apply when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Trajectory with diagnostics.
    Simulate,
    /// Squeezing ratios q_hat(N).
    Squeeze,
    /// Master/slave synchronisation through the low modes.
    #[command(name = "det-modes")]
    DetModes,
    /// Randomly kicked chain and ensemble distance.
    Kick,
    /// Diagnostics over stored snapshots.
    Diag { snapshots: Vec<PathBuf> },
    /// Merge experiment CSV files into plot tables.
    Plotdata { csv: Vec<PathBuf> },
    /// Validate the configuration and write the resolved echo.
    Check,
}

fn load(cli: &Cli) -> CliResult<RunConfig> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|source| CliError::Io {
            path: p.clone(),
            source,
        })?,
        None => String::new(),
    };
    let mut config = parse_config(&text)?;
    if let Some(s) = cli.seed {
        config = config.with_seed(s);
    }
    if let Some(o) = &cli.out {
        config = config.with_output(o.clone());
    }
    Ok(config)
}

fn main_inner(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let config = load(&cli)?;
    let (command, inputs) = match cli.command {
        Cmd::Simulate => (Command::Simulate, Vec::new()),
        Cmd::Squeeze => (Command::Squeeze, Vec::new()),
        Cmd::DetModes => (Command::DetModes, Vec::new()),
        Cmd::Kick => (Command::Kick, Vec::new()),
        Cmd::Diag { snapshots } => (Command::Diag, snapshots),
        Cmd::Plotdata { csv } => (Command::Plotdata, csv),
        Cmd::Check => (Command::Check, Vec::new()),
    };
    let out = run(command, &config, &inputs)?;
    for f in out.files() {
        println!("{}", config.output.join(f).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pe3d: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
