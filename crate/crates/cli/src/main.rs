use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use powerflow_cli::{cmd_run, cmd_sweep_tau, cmd_verify, Common};

#[derive(Parser)]
#[command(name = "powerflow", version, about = "Power mean curvature flow of spacelike graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized initial data.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the flow described by a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        shared: Shared,
    },
    /// Measure convergence of the evolution identities on parametric curves.
    Verify {
        /// `all` or a comma-separated list of identity names.
        #[arg(long, default_value = "all")]
        identity: String,
        /// `all`, `minkowski` or `robertson-walker`.
        #[arg(long, default_value = "all")]
        fixture: String,
        /// Refinement levels per series (at least 3).
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[command(flatten)]
        shared: Shared,
    },
    /// Run to stationarity for a descending list of regularizers.
    SweepTau {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated, strictly descending.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        taus: Vec<f64>,
        #[command(flatten)]
        shared: Shared,
    },
}

fn common(s: Shared) -> Common {
    Common {
        out: s.out,
        seed: s.seed,
        quiet: s.quiet,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, shared } => cmd_run(&config, &common(shared)),
        Command::Verify {
            identity,
            fixture,
            levels,
            shared,
        } => cmd_verify(&identity, &fixture, levels, &common(shared)),
        Command::SweepTau { config, taus, shared } => cmd_sweep_tau(&config, &taus, &common(shared)),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("powerflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
