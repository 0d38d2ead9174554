use thiserror::Error;

/// Errors produced by planning, control, and simulation routines.
#[derive(Error, Debug)]
pub enum Error {
    #[error("orientation within {0} rad of the Euler-rate singularity (pitch = ±π/2)")]
    SingularOrientation(f64),
    #[error("unknown gait `{0}`")]
    UnknownGait(String),
    #[error("landing target unreachable: apex {apex:.4} m below target height {target:.4} m")]
    Unreachable { apex: f64, target: f64 },
    #[error("degenerate timing: takeoff and flight durations give a zero-gain transfer")]
    DegenerateTiming,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("solver exceeded {0} iterations")]
    MaxIterationsExceeded(usize),
    #[error("line search failed (step below 1e-12)")]
    LineSearchFailure,
    #[error("constraints are infeasible")]
    Infeasible,
    #[error("objective unbounded below on the feasible set")]
    Unbounded,
    #[error("Riccati backward sweep diverged (‖P‖ exceeded {0:.1e})")]
    RiccatiBlowup(f64),
    #[error("rotation error magnitude {0:.4} rad too close to π for the log map")]
    RotationErrorTooLarge(f64),
    #[error("controller queried at t = {0:.4} s past the end of the gain schedule")]
    ScheduleExpired(f64),
    #[error("trace contains no touchdown event")]
    NoTouchdown,
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
