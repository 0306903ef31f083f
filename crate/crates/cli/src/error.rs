use std::path::PathBuf;

use gradflow::harness::HarnessError;
use gradflow::schemes::SchemeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 is left to argument parsing.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Invariant(_) => 4,
            CliError::Io { .. } => 5,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<SchemeError> for CliError {
    fn from(e: SchemeError) -> Self {
        match e {
            SchemeError::Config(_) | SchemeError::Model(_) | SchemeError::Aux(_) | SchemeError::Grid(_) => {
                CliError::Config(e.to_string())
            }
            SchemeError::Solve(_) | SchemeError::State(_) => CliError::Solver(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(msg) => CliError::Config(msg),
            HarnessError::Scheme(s) => s.into(),
            HarnessError::Step { .. } => CliError::Solver(e.to_string()),
            HarnessError::Io { path, source } => CliError::Io { path, source },
        }
    }
}
