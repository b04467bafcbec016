use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use compete_cli::{cmd_run, cmd_sweep, cmd_verify, parse_config, CliError, Overrides, SweepAxis, EXIT_CONFIG};

/// Online selection against general comparator classes.
#[derive(Debug, Parser)]
#[command(name = "compete", version)]
struct Cli {
    /// Run-config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replace the config's seed list with this single seed.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent episodes; 1 runs them in order.
    #[arg(long, global = true, value_name = "N")]
    parallel: Option<usize>,
    /// Abort with exit code 2 on the first failed assumption audit.
    #[arg(long, global = true)]
    strict_assumptions: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every seed and write ledgers, bound reports and a summary.
    Run,
    /// Check the engine against the oracle and its invariances.
    Verify,
    /// Run a grid over one axis and write an aggregate CSV.
    Sweep {
        /// T, M, W or gap; defaults to the config's [sweep] axis.
        #[arg(long)]
        axis: Option<SweepAxis>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = &cli.config else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(EXIT_CONFIG);
    };
    let config = match parse_config(path) {
        Ok(c) => c,
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    for w in &config.warnings {
        eprintln!("warning: {w}");
    }
    if cli.parallel == Some(0) {
        eprintln!("error: --parallel needs at least one thread");
        return ExitCode::from(EXIT_CONFIG);
    }
    let overrides = Overrides {
        seed: cli.seed_override,
        out: cli.out,
        threads: cli.parallel,
        strict: cli.strict_assumptions,
    };

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result: Result<(), CliError> = match cli.command {
        Command::Run => cmd_run(&config, &overrides, &mut out),
        Command::Verify => cmd_verify(&config, &overrides, &mut out),
        Command::Sweep { axis } => cmd_sweep(&config, axis, &overrides, &mut out),
    };
    let _ = out.flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
