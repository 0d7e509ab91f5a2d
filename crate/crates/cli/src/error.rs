//! Error type carrying the exit-code contract: 2 for anything the caller
//! can fix (bad flags, unreadable or malformed inputs), 1 for faults inside
//! the pipeline. Success is 0 by not erroring.

use std::fmt;

#[derive(Debug)]
pub struct CliError {
    message: String,
    code: i32,
}

impl CliError {
    /// The caller's fault: missing files, malformed JSON/TOML, unknown
    /// names. Exit code 2.
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            code: 2,
        }
    }

    /// Our fault: a pipeline stage failed on structurally valid input.
    /// Exit code 1.
    pub fn internal(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            code: 1,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.code
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}
