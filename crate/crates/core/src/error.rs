use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum NlsError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("component count mismatch: expected {expected}, got {got}")]
    ComponentMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("nonlinearity failed the H/h consistency check: max deviation {deviation:.3e} at s = {witness:?}")]
    InconsistentNonlinearity { deviation: f64, witness: Vec<f64> },

    #[error("hypothesis check needs an asymptotic nonlinearity H^inf for {0}")]
    MissingInfinitySpec(String),

    #[error("invalid hypothesis parameters: {0}")]
    InvalidHypothesisParams(String),

    #[error("energy diverged to {energy:e} at iteration {iteration}")]
    DivergentEnergy { energy: f64, iteration: usize },

    #[error("component {0} has zero mass; its multiplier is undefined")]
    ZeroMass(usize),

    #[error("orbit is empty: {0}")]
    EmptyOrbit(String),

    #[error("blow-up detected at t = {time}: {reason}")]
    BlowUp { time: f64, reason: String },

    #[error("malformed field dump: {0}")]
    Dump(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NlsError>;
