use clap::{Parser, Subcommand};
use pbml_cli::config::RunConfig;
use pbml_cli::experiment::{run_experiment, run_transfer, HarnessError};
use pbml_cli::report::report;
use std::path::PathBuf;
use std::process::ExitCode;

/// Population-based meta learning experiments.
#[derive(Parser)]
#[command(name = "pbml", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Added to every configured seed.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Continue a checkpointed population in another world.
    Transfer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Target world config.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        generations: u64,
    },
    /// Summarize metrics from run directories into one CSV.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn fail(message: impl std::fmt::Display, code: u8) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed_offset } => {
            let cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e, 1),
            };
            match run_experiment(&cfg, seed_offset) {
                Ok(dirs) => {
                    dirs.iter().for_each(|d| println!("{}", d.display()));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e, exit_code(&e)),
            }
        }
        Command::Transfer { checkpoint, config, generations } => {
            let cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e, 1),
            };
            match run_transfer(&checkpoint, &cfg, generations) {
                Ok(dir) => {
                    println!("{}", dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e, exit_code(&e)),
            }
        }
        Command::Report { dirs, out } => match report(&dirs, &out) {
            Ok(rows) => {
                println!("{} methods -> {}", rows.len(), out.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e, 2),
        },
    }
}

fn exit_code(e: &HarnessError) -> u8 {
    e.exit_code() as u8
}
