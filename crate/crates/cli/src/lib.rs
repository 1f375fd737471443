//! Command-line harness: config handling and one function per subcommand.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] synsacc_core::Error),
}

impl CliError {
    /// 0 success, 2 config error, 3 data error, 4 numeric divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(synsacc_core::Error::Param(_)) => 2,
            CliError::Core(synsacc_core::Error::Divergence(_)) => 4,
            CliError::Core(_) => 3,
        }
    }
}
