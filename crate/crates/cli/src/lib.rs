//! Batch front end for the catrisk experiment protocol: fit models, score them
//! against a test set, estimate ruin probabilities and build fuzzy opinions.
//!
//! Every subcommand writes `report.json` to the output directory; `evaluate`
//! also writes `errors.csv`, and `evaluate`/`fuzzy` write one
//! `fuzzy_<severity>_<intensity>_<method>.csv` per model cell.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::ffi::OsString;

use clap::Parser;

pub use commands::{cmd_evaluate, cmd_fit, cmd_fuzzy, cmd_resample, cmd_ruin, cmd_synth_estimate};
pub use config::{Cli, Command, ExperimentConfig, FitMethod};
pub use error::CliError;
pub use report::Report;

/// Dispatch a parsed command.
pub fn execute(command: &Command) -> Result<Report, CliError> {
    match command {
        Command::Fit(c) => cmd_fit(c),
        Command::Evaluate(c) => cmd_evaluate(c),
        Command::Resample(c) => cmd_resample(c),
        Command::Ruin(c) => cmd_ruin(c),
        Command::Fuzzy(c) => cmd_fuzzy(c),
        Command::SynthEstimate(c) => cmd_synth_estimate(c),
    }
}

/// Parse `args`, run the command and return the process exit code. Errors go
/// to stderr as a JSON document.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let err = CliError::Usage(e.render().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    let outcome = execute(&cli.command).and_then(|report| {
        let failed = report.failures();
        if failed > 0 {
            Err(CliError::Partial {
                failed,
                total: report.entries(),
            })
        } else {
            Ok(report)
        }
    });
    match outcome {
        Ok(report) => {
            println!(
                "{}: wrote {}",
                report.command,
                cli.command
                    .config()
                    .out_dir
                    .join(commands::REPORT_FILE)
                    .display()
            );
            0
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            err.exit_code()
        }
    }
}
