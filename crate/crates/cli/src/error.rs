use frontlab_core::FrontError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("solver: {0}")]
    Solver(FrontError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(e: FrontError) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(_) => 1,
            CliError::Usage(_) | CliError::Config(_) | CliError::Io(_) => 2,
        }
    }
}

/// Input problems are the caller's; everything else is a failed check.
impl From<FrontError> for CliError {
    fn from(e: FrontError) -> Self {
        use FrontError::*;
        match e {
            UnsupportedFamily(_)
            | HeavyTail { .. }
            | InvalidParameter { .. }
            | SpacingMismatch { .. }
            | WindowTooNarrow { .. }
            | StepTooLarge { .. }
            | MomentOutOfRange { .. }
            | OrderCap { .. }
            | Precondition(_) => CliError::Config(e.to_string()),
            other => CliError::Solver(other),
        }
    }
}
