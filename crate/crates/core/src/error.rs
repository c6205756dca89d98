use thiserror::Error;

use crate::model::Site;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter failed validation. `field` names the offending input.
    #[error("invalid `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("a ring needs an even number of cavities, at least 2 (got {0})")]
    CavityCount(usize),

    #[error("site {site} is a {found} cavity, expected a {expected} cavity")]
    WrongSiteKind {
        site: Site,
        expected: &'static str,
        found: &'static str,
    },

    #[error("eigensolver failed: {0}")]
    EigenSolver(String),

    #[error("step size underflow at t = {t}: h = {h:e}")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("step budget of {0} exhausted before reaching the final time")]
    TooManySteps(usize),

    #[error("invariant violated at t = {time}: {what} (magnitude {magnitude:e})")]
    InvariantViolation {
        time: f64,
        what: String,
        magnitude: f64,
    },

    #[error("step dt = {dt} is unstable for Euler-Maruyama; need dt * max(kappa, 2J) < {limit}")]
    UnstableStep { dt: f64, limit: f64 },

    #[error("time grids do not match: {0}")]
    GridMismatch(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
