use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum JmError {
    #[error("shape mismatch: expected {expected} coordinates, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("invalid mass system: {0}")]
    InvalidMassSystem(String),

    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),

    #[error("collision between bodies {i} and {j} (distance {distance:e})")]
    Collision { i: usize, j: usize, distance: f64 },

    #[error("state `{state}` has a collision between bodies {i} and {j} (distance {distance:e})")]
    StateCollision {
        state: String,
        i: usize,
        j: usize,
        distance: f64,
    },

    #[error("integration step size underflow at t = {t}")]
    StepFailure { t: f64 },

    #[error("collision approach detected near t = {t_star}")]
    CollisionApproach { t_star: f64 },

    #[error("energy drift {drift:e} exceeds bound {bound:e}")]
    EnergyDrift { drift: f64, bound: f64 },

    #[error("every start of the action minimization hit the collision barrier")]
    AllStartsFailed,

    #[error("could not bracket the free-time minimum: {0}")]
    BracketFailure(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("trajectory left the cone at t = {t}")]
    ConeExit { t: f64 },

    #[error("scenario error in `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("{0}")]
    Io(String),
}

impl JmError {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            JmError::ShapeMismatch { .. } => "shape-mismatch",
            JmError::InvalidMassSystem(_) => "invalid-mass-system",
            JmError::NonFinite(_) => "non-finite",
            JmError::Collision { .. } => "collision",
            JmError::StateCollision { .. } => "state-collision",
            JmError::StepFailure { .. } => "step-failure",
            JmError::CollisionApproach { .. } => "collision-approach",
            JmError::EnergyDrift { .. } => "energy-drift",
            JmError::AllStartsFailed => "all-starts-failed",
            JmError::BracketFailure(_) => "bracket-failure",
            JmError::Precondition(_) => "precondition",
            JmError::NonConvergence(_) => "non-convergence",
            JmError::ConeExit { .. } => "cone-exit",
            JmError::Schema { .. } => "schema",
            JmError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, JmError>;

impl From<std::io::Error> for JmError {
    fn from(e: std::io::Error) -> Self {
        JmError::Io(e.to_string())
    }
}
