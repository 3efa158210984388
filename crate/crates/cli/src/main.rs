mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;
use hardnet::Error;

use args::{Cli, Command};

/// 2 config or validation, 3 I/O or file format, 4 numeric divergence.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Image(_) | Error::Format(_) => 3,
        Error::Divergence(_) | Error::Domain { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Describe(a) => commands::describe(a),
        Command::Eval(a) => commands::eval(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::BatchSweep(a) => commands::batch_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
