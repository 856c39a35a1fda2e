// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Rejected scenario configuration. `line` is 1-based when the error comes
/// from a config file.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}config error on `{key}`: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub key: String,
    pub message: String,
    pub line: Option<usize>,
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            message: message.into(),
            line: None,
        }
    }

    pub fn at_line(mut self, line: usize) -> Self {
        self.line.get_or_insert(line);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("malformed segment: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// A runtime invariant failed; the run is aborted.
    #[error("invariant breach: {0}")]
    InvariantBreach(String),
    #[error("transfer incomplete: {0}")]
    Incomplete(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn breach(msg: impl Into<String>) -> Self {
        SimError::InvariantBreach(msg.into())
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            // an unwritable trace path is a configuration problem
            SimError::Config(_) | SimError::Io(_) => 1,
            SimError::InvariantBreach(_) | SimError::Incomplete(_) => 2,
        }
    }
}
