//! Error type shared by the whole library.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
///
/// Numerical routines distinguish *input* problems (wrong domain, out-of-range
/// parameters) from *solver* problems (inner solver ran out of budget,
/// trajectory collapsed onto the nullspace). Callers that drive whole runs can
/// map the two groups onto different exit paths.
#[derive(Debug, Error)]
pub enum Error {
    /// A signal was paired with a domain of a different size.
    #[error("{context}: expected {expected} values, got {got}")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Two objects that must share a domain were built on different ones.
    #[error("{context}: operands belong to different domains")]
    DomainMismatch { context: &'static str },

    /// Input that is structurally valid but numerically unusable
    /// (zero signal where a direction is required, empty mask, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The inner proximal solver exhausted its iteration budget before the
    /// duality gap fell below tolerance. Carries the residual so callers can
    /// decide whether the partial answer is still useful.
    #[error(
        "prox solver: duality gap {gap:.3e} still above tolerance {tolerance:.3e} \
         after {iterations} iterations"
    )]
    ProxNoConvergence {
        iterations: usize,
        gap: f64,
        tolerance: f64,
    },

    /// An iterative flow collapsed (e.g. onto the functional's nullspace)
    /// and no eigenpair can be recovered from the trajectory.
    #[error("degenerate trajectory: {0}")]
    DegenerateTrajectory(String),

    /// A value that must stay finite became NaN or infinite.
    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    /// An externally supplied operator failed (bad subprocess, shape error...).
    #[error("operator error: {0}")]
    Operator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Text input that could not be parsed; reports the offending line.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

impl Error {
    /// True when the error indicates bad *input* rather than a solver failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::LengthMismatch { .. }
                | Error::DomainMismatch { .. }
                | Error::DegenerateInput(_)
                | Error::InvalidParameter(_)
                | Error::Parse { .. }
        )
    }
}
