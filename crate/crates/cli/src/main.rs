//! `crushsim`: run scenarios, train the crush classifier, compare hybrid
//! against full-force cost, and summarise run archives.
//!
//! Every flag can also be set through an environment variable named
//! `CRUSH_<FLAG>` (upper case, dashes as underscores), e.g. `CRUSH_SEED`.

mod benchmark;
mod inputs;
mod report;
mod run;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crushsim_core::{ArchiveError, MetricsError, NumericError, SimError};

#[derive(Debug, Parser)]
#[command(name = "crushsim", version, about = "Hybrid crowd-crush simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write a run archive.
    Run(run::RunArgs),
    /// Train the crush classifier on full-force archives.
    Train(train::TrainArgs),
    /// Run full-force and hybrid on the same seed and compare their cost.
    Benchmark(benchmark::BenchmarkArgs),
    /// Summarise a run archive.
    Report(report::ReportArgs),
    /// Print the effective run config, or a scenario, as TOML.
    ConfigDump(inputs::DumpArgs),
    /// Check a scenario (and optionally a config) without running it.
    Validate(inputs::ValidateArgs),
}

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_INCOMPLETE: u8 = 4;

/// Exit status for a failed command, read off the error chain.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<NumericError>() || matches!(cause.downcast_ref::<SimError>(), Some(SimError::Numeric(_))) {
            return EXIT_NUMERIC;
        }
        if cause.is::<MetricsError>()
            || matches!(cause.downcast_ref::<ArchiveError>(), Some(ArchiveError::Incomplete(_)))
            || matches!(
                cause.downcast_ref::<SimError>(),
                Some(SimError::Archive(ArchiveError::Incomplete(_)))
            )
        {
            return EXIT_INCOMPLETE;
        }
    }
    EXIT_VALIDATION
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run::run(a),
        Command::Train(a) => train::train(a),
        Command::Benchmark(a) => benchmark::benchmark(a),
        Command::Report(a) => report::report(a),
        Command::ConfigDump(a) => inputs::dump(a),
        Command::Validate(a) => inputs::validate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;
    use std::path::PathBuf;

    #[test]
    fn exit_codes_follow_the_error_chain() {
        let numeric = SimError::from(NumericError {
            tick: 3,
            agent: Some(1),
            what: "velocity",
        });
        assert_eq!(exit_code(&anyhow::Error::from(numeric).context("running")), EXIT_NUMERIC);
        let missing = Err::<(), _>(ArchiveError::Incomplete(PathBuf::from("a/cost_summary.json")))
            .context("reading archive")
            .unwrap_err();
        assert_eq!(exit_code(&missing), EXIT_INCOMPLETE);
        assert_eq!(exit_code(&anyhow::anyhow!("bad flag")), EXIT_VALIDATION);
    }
}
