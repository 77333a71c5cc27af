mod args;
mod commands;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;
use mrf_core::ErrorClass;

use args::{Cli, Command};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_AUDIT: u8 = 4;

/// A command line that parses but asks for something inconsistent.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub enum Outcome {
    Success,
    AuditViolation,
}

/// Configuration problems exit 2; everything about the input data, model
/// files or output paths exits 3.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<mrf_core::Error>() {
            return match e.class() {
                ErrorClass::Config => EXIT_CONFIG,
                ErrorClass::Data | ErrorClass::Io => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Cv(a) => commands::cv(a),
        Command::Sweep(a) => commands::run_sweep(a),
        Command::Audit(a) => commands::audit(a),
        Command::Budget(a) => commands::budget(a),
        Command::TreeDist(a) => commands::tree_dist(a),
        Command::Rank(a) => commands::rank(a),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::AuditViolation) => ExitCode::from(EXIT_AUDIT),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
