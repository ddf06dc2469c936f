use std::fmt;

use thiserror::Error;

/// Pipeline stage an error came from; printed as a tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Partition,
    Place,
    Plan,
    Verify,
    Attack,
    Score,
    Ksec,
    Report,
    Oracle,
    Io,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Partition => "partition",
            Stage::Place => "place",
            Stage::Plan => "plan",
            Stage::Verify => "verify",
            Stage::Attack => "attack",
            Stage::Score => "score",
            Stage::Ksec => "ksec",
            Stage::Report => "report",
            Stage::Oracle => "oracle",
            Stage::Io => "io",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    /// A checked invariant failed: a bug, not bad input.
    Internal,
}

#[derive(Debug, Error)]
#[error("[{stage}] {message}")]
pub struct CliError {
    pub stage: Stage,
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(stage: Stage, message: impl Into<String>) -> Self {
        CliError { stage, kind: Kind::Usage, message: message.into() }
    }

    pub fn data(stage: Stage, message: impl fmt::Display) -> Self {
        CliError { stage, kind: Kind::Data, message: message.to_string() }
    }

    pub fn internal(stage: Stage, message: impl fmt::Display) -> Self {
        CliError { stage, kind: Kind::Internal, message: message.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Internal => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Tags any displayable error as a data error of `stage`.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T, E: fmt::Display> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| CliError::data(stage, e))
    }
}
