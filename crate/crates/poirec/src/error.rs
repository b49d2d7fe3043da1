use std::fmt;
use std::io;
use std::path::PathBuf;

use poirec_core::interactions::InteractionError;
use poirec_core::model::ModelError;
use poirec_core::synthgen::SynthError;
use poirec_core::training::TrainError;
use poirec_core::ukg::KgError;

#[derive(Debug)]
pub enum CliError {
    Io { path: PathBuf, source: io::Error },
    MissingFile(PathBuf),
    Config { line: Option<usize>, message: String },
    Kg { path: PathBuf, source: KgError },
    Checkins { path: PathBuf, source: InteractionError },
    GroundTruth(PathBuf),
    Synth(SynthError),
    Train(TrainError),
    Model(ModelError),
    Checkpoint { path: PathBuf, line: usize, message: String },
}

impl CliError {
    /// Stable identifier for the error line printed by the binary.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::MissingFile(_) => "missing_file",
            CliError::Config { .. } => "config",
            CliError::Kg { .. } => "kg",
            CliError::Checkins { .. } => "checkins",
            CliError::GroundTruth(_) => "ground_truth",
            CliError::Synth(SynthError::InvalidConfig(_)) => "config",
            CliError::Synth(_) => "synth",
            CliError::Train(_) => "train",
            CliError::Model(ModelError::DimsMismatch { .. }) => "dims_mismatch",
            CliError::Model(_) => "model",
            CliError::Checkpoint { .. } => "checkpoint",
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config { line: None, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::MissingFile(path) => write!(f, "{}: no such file", path.display()),
            CliError::Config { line: Some(line), message } => write!(f, "config line {line}: {message}"),
            CliError::Config { line: None, message } => write!(f, "config: {message}"),
            CliError::Kg { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Checkins { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::GroundTruth(path) => write!(f, "{}: malformed ground-truth file", path.display()),
            CliError::Synth(e) => e.fmt(f),
            CliError::Train(e) => e.fmt(f),
            CliError::Model(e) => e.fmt(f),
            CliError::Checkpoint { path, line, message } => write!(f, "{} line {line}: {message}", path.display()),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Synth(e)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        CliError::Train(e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Model(e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
