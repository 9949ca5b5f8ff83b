//! `deltashell`: reproducible experiments for Dirac δ-shell couplings.
//!
//! Exit codes: 0 success, 1 failed check or numerical error, 2 usage error.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{ConvergeArgs, CouplingArgs, GeometryArgs, JumpArgs, KleinArgs, SpectrumArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Assertion(String),
    Numerical(deltashell::Error),
    Io(String),
}

impl From<deltashell::Error> for CliError {
    fn from(e: deltashell::Error) -> Self {
        use deltashell::Error as E;
        match e {
            E::InvalidArgument(_) | E::InvalidProfile(_) | E::InvalidEpsilon { .. } | E::InvalidSpectralParameter { .. } => {
                Self::Usage(e.to_string())
            }
            other => Self::Numerical(other),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let (kind, message) = match self {
            Self::Usage(m) => ("usage", m.clone()),
            Self::Assertion(m) => ("assertion", m.clone()),
            Self::Numerical(e) => ("numerical", e.to_string()),
            Self::Io(m) => ("io", m.clone()),
        };
        json!({ "error": { "kind": kind, "message": message, "exit_code": self.code() } })
    }
}

#[derive(Debug, Parser)]
#[command(name = "deltashell", version, about = "Dirac δ-shell couplings, layer potentials and squeezed-potential studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Nonlinear couplings λ_e, λ_s by direct solve, Neumann series and closed form
    Coupling(CouplingArgs),
    /// One-sided limits of the single layer against the Plemelj jump relation
    JumpCheck(JumpArgs),
    /// Coarea integrals over a surface collar against closed forms
    GeometryAudit(GeometryArgs),
    /// Strong-convergence table of the squeezed operator family
    Converge(ConvergeArgs),
    /// Gap eigenvalues of the radial channels
    Spectrum(SpectrumArgs),
    /// Squeezed eigenvalues against the nonlinear and naive shell couplings
    Klein(KleinArgs),
}

fn run(cmd: Command) -> Result<(), CliError> {
    use config::merge;
    match cmd {
        Command::Coupling(a) => commands::coupling(&merge(&a, a.out.config.as_deref())?),
        Command::JumpCheck(a) => commands::jump_check(&merge(&a, a.out.config.as_deref())?),
        Command::GeometryAudit(a) => commands::geometry_audit(&merge(&a, a.out.config.as_deref())?),
        Command::Converge(a) => commands::converge(&merge(&a, a.out.config.as_deref())?),
        Command::Spectrum(a) => commands::spectrum(&merge(&a, a.out.config.as_deref())?),
        Command::Klein(a) => commands::klein(&merge(&a, a.out.config.as_deref())?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code())
        }
    }
}
