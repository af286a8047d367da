//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside admissible range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("flux is not convex or concave on [{lo}, {hi}]: inflection point at {inflection}")]
    ConvexityViolation { lo: f64, hi: f64, inflection: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("time step {dt} exceeds the next collision time {dt_max}")]
    Overshoot { dt: f64, dt_max: f64 },

    #[error("root finding failed: {0}")]
    RootFind(String),

    #[error("merge of pair {index} is infeasible: {reason}")]
    MergeInfeasible { index: usize, reason: String },

    #[error("merge of pair {index} unresolved after {rounds} entropy-fix rounds")]
    UnresolvedMerge { index: usize, rounds: usize },

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("profiles have disjoint supports")]
    DisjointSupports,

    #[error("CFL violation at t = {t}: dt*s_max/dx = {ratio}")]
    CflViolation { ratio: f64, t: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
