use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use coldgen::cli::{self, Command, Invocation, EXIT_CONFIG};

/// Generative cold-plate channel design.
#[derive(Debug, Parser)]
#[command(name = "coldgen", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides `loop.rng_seed`.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// -v for info, -vv for per-round debug output.
    #[arg(short, long, action = ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Solve the straight parallel-channel reference design.
    Baseline(Common),
    /// Run the thermally coupled reaction-diffusion design loop.
    Generate(Common),
    /// Solve the temperature field for a mask read from CSV.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "CSV")]
        mask: PathBuf,
    },
    /// Generate a design and compare it to the baseline.
    Compare(Common),
    /// Baseline, generate and compare, writing every artifact.
    Pipeline(Common),
}

fn main() -> ExitCode {
    let parsed = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let (command, common, mask) = match parsed.command {
        Cmd::Baseline(c) => (Command::Baseline, c, None),
        Cmd::Generate(c) => (Command::Generate, c, None),
        Cmd::Solve { common, mask } => (Command::Solve, common, Some(mask)),
        Cmd::Compare(c) => (Command::Compare, c, None),
        Cmd::Pipeline(c) => (Command::Pipeline, c, None),
    };

    let level = match common.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("COLDGEN_LOG")
        .init();
    if let Some(n) = coldgen::parallel::init_from_env() {
        log::info!("using {n} worker threads");
    }

    let inv = Invocation {
        command,
        config: common.config,
        out: common.out,
        seed: common.seed,
        mask,
    };
    ExitCode::from(cli::run(&inv) as u8)
}
