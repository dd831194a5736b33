use thiserror::Error;

pub type Result<T, E = DuoError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DuoError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("contrastive batch needs at least 2 pairs, got {0}")]
    BatchTooSmall(usize),

    #[error("embedding row {row} has zero norm")]
    ZeroNorm { row: usize },

    #[error("training diverged at step {step}")]
    DivergedTraining { step: u64 },

    #[error(transparent)]
    Core(#[from] parabench_core::Error),
}
