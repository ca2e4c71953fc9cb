use std::fmt;

use focal_core::config::ConfigError;
use focal_core::data::DataError;
use focal_core::eval::EvalError;
use focal_core::game::TrainError;
use focal_core::nn::checkpoint::CheckpointError;

/// Stable exit-code classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Config,
    Io,
    Numeric,
    Artifact,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            Self::Config => 2,
            Self::Io => 3,
            Self::Numeric => 4,
            Self::Artifact => 5,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ExitKind, message: impl fmt::Display) -> Self {
        Self {
            kind,
            message: message.to_string(),
        }
    }

    pub fn config(message: impl fmt::Display) -> Self {
        Self::new(ExitKind::Config, message)
    }

    pub fn io(message: impl fmt::Display) -> Self {
        Self::new(ExitKind::Io, message)
    }

    pub fn artifact(message: impl fmt::Display) -> Self {
        Self::new(ExitKind::Artifact, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let kind = match e {
            ConfigError::Io { .. } => ExitKind::Io,
            _ => ExitKind::Config,
        };
        Self::new(kind, e)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let kind = match e {
            DataError::Io { .. } | DataError::Csv(_) => ExitKind::Io,
            DataError::Cache(_) => ExitKind::Artifact,
            _ => ExitKind::Config,
        };
        Self::new(kind, e)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let kind = match e {
            EvalError::Io { .. } | EvalError::Csv(_) => ExitKind::Io,
            EvalError::ClassAbsent { .. } | EvalError::UndefinedRate { .. } | EvalError::NonBinary(_) => ExitKind::Config,
            _ => ExitKind::Artifact,
        };
        Self::new(kind, e)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(c) => c.into(),
            TrainError::Eval(v) => v.into(),
            TrainError::Divergence { .. } => Self::new(ExitKind::Numeric, e),
            TrainError::Partition(_) | TrainError::EmptyGrid => Self::config(e),
            TrainError::Mismatch(_) | TrainError::Nn(_) => Self::artifact(e),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        let kind = match e {
            CheckpointError::Io { .. } => ExitKind::Io,
            _ => ExitKind::Artifact,
        };
        Self::new(kind, e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::io(e)
    }
}
