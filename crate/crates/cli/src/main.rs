//! `survuq` command-line front end.
//!
//! Exit codes: 0 on success, 1 on data or validation errors, 2 on usage
//! errors.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, UqCommand};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::FitCox(a) => commands::fit_cox(a),
        Command::Uq(UqCommand::Score(a)) => commands::uq_score(a),
        Command::Uq(UqCommand::Sweep(a)) => commands::uq_sweep(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
