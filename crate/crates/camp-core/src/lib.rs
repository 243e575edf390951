//! Collision avoidance maneuver planning for satellites in low Earth orbit.
//!
//! The crate simulates close encounters between an operator-controlled
//! satellite (the chief) and a piece of debris (the deputy), computes the
//! probability of collision at closest approach, and plans evasive maneuvers
//! with Monte Carlo tree search or rule-based cutoff policies. A batch
//! evaluation harness scores policies by fuel spent per encounter and by the
//! fraction of dangerous encounters successfully mitigated.

pub mod cli;
pub mod conjunction;
pub mod eval;
pub mod mdp;
pub mod orbital;
pub mod planners;
pub mod scenario;

pub(crate) mod linalg;
pub mod seeds;

use mdp::Action;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("eccentricity {0} is outside [0, 1)")]
    Eccentricity(f64),
    #[error("state has (near-)zero angular momentum; orbit is rectilinear")]
    Rectilinear,
    #[error("velocity magnitude is zero")]
    ZeroVelocity,
    #[error("relative velocity is zero; encounter plane is undefined")]
    ZeroRelativeVelocity,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{0}")]
    InvalidValue(String),
    #[error("covariance matrix is not symmetric")]
    AsymmetricCovariance,
    #[error("covariance position block is not positive semi-definite")]
    NotPositiveSemiDefinite,
    #[error("state is terminal (t = 0)")]
    TerminalState,
    #[error("action {action:?} is illegal at t = {t_hours} h")]
    IllegalAction { action: Action, t_hours: u32 },
    #[error("maneuver cost undefined: Pc {pc:.3e} does not exceed threshold {threshold:.3e}")]
    ManeuverNotRequired { pc: f64, threshold: f64 },
    #[error("maneuver search exceeded {0} thrust steps")]
    ManeuverIterationCap(u64),
    #[error("evaluation set has no {0} encounters")]
    EmptyClass(&'static str),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for parameter-validation failures.
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidValue(msg.into())
    }
}
