use thiserror::Error;

/// Errors produced by the front computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrontError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("step size underflow at y = {y}")]
    StepFailure { y: f64 },

    #[error("shot at alpha = {alpha} undecided up to y = {y_max}; enlarge the horizon")]
    Inconclusive { alpha: f64, y_max: f64 },

    #[error("no Low/High bracket found for the shooting parameter: {0}")]
    BracketNotFound(String),

    #[error("tails not resolved: {0}")]
    TailsNotResolved(String),

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("time step {dt} exceeds stability bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("front reached the boundary buffer at t = {t} (position {position})")]
    FrontHitBoundary { t: f64, position: f64 },
}

pub type Result<T> = std::result::Result<T, FrontError>;
