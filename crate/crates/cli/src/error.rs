use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("scenario error: {0}")]
    Parse(String),

    #[error(transparent)]
    Model(#[from] ambiguity::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad input, 3 for numerical instability.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Model(ambiguity::Error::GridTooCoarse { .. } | ambiguity::Error::SimulationFailure { .. }) => 3,
            _ => 2,
        }
    }
}
