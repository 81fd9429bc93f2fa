use std::path::PathBuf;

use rbsde_core::LabError;
use thiserror::Error;

use crate::report::ReportRow;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input located in a scenario file.
    #[error("{}: [{section}] {key}: {message}", file.display())]
    Input {
        file: PathBuf,
        section: String,
        key: String,
        message: String,
    },

    #[error("{context}: {source}")]
    Lab {
        context: String,
        #[source]
        source: LabError,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A checked property failed; the offending row is attached.
    #[error("property failed: {message}")]
    Property { message: String, row: Option<ReportRow> },
}

impl CliError {
    pub fn input(
        file: impl Into<PathBuf>,
        section: impl Into<String>,
        key: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        CliError::Input {
            file: file.into(),
            section: section.into(),
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn lab(context: impl Into<String>, source: LabError) -> Self {
        CliError::Lab {
            context: context.into(),
            source,
        }
    }

    /// 2 for input errors, 1 for solver and property failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } | CliError::Io { .. } => 2,
            CliError::Lab { source, .. } => match source {
                LabError::UnknownGenerator(_)
                | LabError::DataOrderingViolation(_)
                | LabError::BarrierViolation { .. } => 2,
                _ => 1,
            },
            CliError::Property { .. } => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
