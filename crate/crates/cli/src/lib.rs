//! Library side of the slfib command line: scenario parsing, expression
//! evaluation, pipeline orchestration and artifact writers. The binary in
//! `main.rs` is a thin clap dispatcher over [`runner`].

pub mod expr;
pub mod output;
pub mod runner;
pub mod scenario;

use thiserror::Error;

/// CLI-level error with the documented exit codes: 2 validation,
/// 3 numerical failure, 4 I/O.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<scenario::ScenarioError> for CliError {
    fn from(e: scenario::ScenarioError) -> Self {
        match e {
            scenario::ScenarioError::Io { .. } => CliError::Io(e.to_string()),
            scenario::ScenarioError::Validation(_) => CliError::Validation(e.to_string()),
        }
    }
}

impl From<slfib_core::evolve::EvolveError> for CliError {
    fn from(e: slfib_core::evolve::EvolveError) -> Self {
        use slfib_core::evolve::EvolveError as E;
        match &e {
            E::Config(_) | E::BandLimit { .. } | E::InitialConstraint { .. } | E::State(_) => {
                CliError::Validation(e.to_string())
            }
            E::PositivityLoss { .. } | E::BlowUp { .. } | E::ResidualCeiling { .. } => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

impl From<slfib_core::ansatz::AnsatzError> for CliError {
    fn from(e: slfib_core::ansatz::AnsatzError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<slfib_core::fibration::FibrationError> for CliError {
    fn from(e: slfib_core::fibration::FibrationError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<slfib_core::cartan::CartanError> for CliError {
    fn from(e: slfib_core::cartan::CartanError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
