//! Command-line front end for the `mlrpca` solvers.
//!
//! Exit status: 0 on success, 1 when a solver stopped without converging
//! (outputs are still written), 2 on usage errors and on configurations a
//! solver rejects (bad λ, unreachable coarse size), 3 when reading, writing
//! or the computation itself fails.

pub mod config;
pub mod manifest;
pub mod run;

use std::ffi::OsString;
use std::process::ExitCode;

pub use config::{parse_args, Command, MaskSpec, RunConfig, SolverKind, SolverSettings, SynthSpec};
pub use manifest::{Manifest, ManifestError};
pub use run::{run, Outcome, RunError, Summary, SUMMARY_HEADER};

pub const EXIT_NOT_CONVERGED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_FAILURE: u8 = 3;

/// Parses `argv`, runs, prints warnings and summaries, and maps the result
/// to an exit status.
pub fn main_with<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match parse_args(argv) {
        Ok(cfg) => cfg,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    match run(&cfg) {
        Ok(outcome) => {
            for s in &outcome.summaries {
                println!("{s}");
                if !s.status.is_converged() {
                    eprintln!(
                        "warning: {} stopped at {} ({} iterations)",
                        s.solver.as_str(),
                        s.status.as_str(),
                        s.iterations
                    );
                }
            }
            if outcome.converged() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_NOT_CONVERGED)
            }
        }
        Err(RunError::Rejected(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(RunError::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
