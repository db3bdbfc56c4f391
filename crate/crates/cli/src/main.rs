mod args;
mod commands;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};
use commands::Failure;

fn run() -> Result<(), Failure> {
    let matches = Cli::command().get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    match &cli.command {
        Command::Segment(a) => commands::run_segment(a, &commands::resolve_config(&a.solver, sub)?),
        Command::Eval(a) => commands::run_eval(a, &commands::resolve_config(&a.solver, sub)?),
        Command::AblateK(a) => commands::run_ablate_k(a, &commands::resolve_config(&a.solver, sub)?),
        Command::AblateFbs(a) => commands::run_ablate_fbs(a, &commands::resolve_config(&a.solver, sub)?),
        Command::GridInfo(a) => commands::run_grid_info(a, &commands::resolve_config(&a.solver, sub)?),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}: {}", f.code, f.message);
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
