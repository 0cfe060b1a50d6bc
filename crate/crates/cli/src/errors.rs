//! Failure classes with fixed exit codes.

use std::path::Path;

use thiserror::Error;
use tracelens_core::bridge::BridgeError;
use tracelens_core::judge::JudgeError;
use tracelens_core::packet::MepError;
use tracelens_core::stats::StatsError;
use tracelens_core::synth::SynthError;
use tracelens_core::trace::TraceError;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_TRANSPORT: u8 = 4;

/// The three ways a subcommand can fail, each with its own exit code so
/// scripts can distinguish a bad invocation from bad inputs from a flaky
/// endpoint.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Transport(_) => EXIT_TRANSPORT,
        }
    }
}

pub fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

pub fn data(msg: impl std::fmt::Display) -> CliError {
    CliError::Data(msg.to_string())
}

/// An io failure while touching `path`.
pub fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

impl From<JudgeError> for CliError {
    fn from(e: JudgeError) -> Self {
        match e {
            JudgeError::Transport { .. } => CliError::Transport(e.to_string()),
            JudgeError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Flags(inner) => inner.into(),
            // Everything else is a bad generator configuration.
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<BridgeError> for CliError {
    fn from(e: BridgeError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MepError> for CliError {
    fn from(e: MepError) -> Self {
        CliError::Data(e.to_string())
    }
}
