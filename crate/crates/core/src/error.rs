use thiserror::Error;

/// Errors produced by the simulation engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QndError {
    #[error("invalid spin system: {0}")]
    InvalidSpec(String),

    #[error("cannot label eigenstate {index}: dominant product components are within {ratio:.3e} of each other (enable degenerate-pair mode for equal splittings)")]
    DegenerateLabeling { index: usize, ratio: f64 },

    #[error("invalid rates: {0}")]
    InvalidRates(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("preset `{0}` has no built-in rate values; supply them explicitly")]
    PresetNeedsValues(String),

    #[error("invalid state vector: {0}")]
    InvalidState(String),

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("unknown rate label `{0}`")]
    UnknownRateLabel(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("generator has {} closed classes {blocks:?}; the stationary state is not unique", blocks.len())]
    DegenerateNullSpace { blocks: Vec<Vec<usize>> },

    #[error("fit failed after {iterations} iterations: {reason}")]
    FitFailure { iterations: usize, reason: String },
}

pub type Result<T, E = QndError> = std::result::Result<T, E>;
