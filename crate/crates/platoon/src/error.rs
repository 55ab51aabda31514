//! Error type shared by the solver and the scenario runner.

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures surfaced by the kernels, the strategies, and the runner.
///
/// Numeric payloads are reported as `f64` regardless of the scalar type the
/// computation ran in.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A scalar argument violated its precondition (non-finite, wrong sign).
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// A strategy was queried outside the game horizon.
    #[error("time {t} outside the horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },

    /// Initial positions are not strictly decreasing front-to-back.
    #[error(
        "initial ordering violated: vehicle {front} starts at {front_position} \
         but vehicle {back} behind it starts at {back_position}"
    )]
    InitialOrdering {
        front: usize,
        back: usize,
        front_position: f64,
        back_position: f64,
    },

    /// A shifted Gramian `I + w Ψ(t)` was numerically singular.
    #[error("shifted Gramian is numerically singular (condition estimate {condition:.3e})")]
    SingularShift { condition: f64 },

    /// As [`Error::SingularShift`], tagged with the follower and time that hit it.
    #[error(
        "shifted Gramian for follower {follower} at t = {t} is numerically singular \
         (condition estimate {condition:.3e})"
    )]
    SingularShiftAt {
        follower: usize,
        t: f64,
        condition: f64,
    },

    /// Adaptive quadrature could not reach its tolerance.
    #[error("quadrature did not converge over [{a}, {b}]: error estimate {estimate:.3e}")]
    QuadratureNoConvergence { a: f64, b: f64, estimate: f64 },

    /// The forward integrator produced a non-finite state.
    #[error("integration diverged: follower {follower} became non-finite at t = {t}")]
    Divergence { follower: usize, t: f64 },

    /// A scenario held no followers.
    #[error("scenario has no followers")]
    NoFollowers,

    /// A scenario file failed to parse.
    #[error("failed to parse scenario: {0}")]
    Parse(String),

    /// A parsed scenario violated a validation rule.
    #[error("invalid scenario: {0}")]
    Validation(String),

    /// Output files could not be written or inputs read.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
