//! Error types shared across the crate.

use crate::model::SysState;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A model parameter is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// beta = 0: the expected transmission time of a task diverges.
    #[error("divergent transmission: channel success probability is zero")]
    DivergentTransmission,

    /// A scheduling decision was applied in a state where it is not allowed.
    #[error("infeasible decision k={k} in state (q={}, c_t={}, c_l={})", state.q, state.c_t, state.c_l)]
    InfeasibleDecision { state: SysState, k: usize },

    /// alpha = 0: no tasks ever arrive, so per-task delay is undefined.
    #[error("undefined delay: task arrival probability is zero")]
    UndefinedDelay,

    /// The policy never schedules any task, so the local fraction is undefined.
    #[error("no throughput: no task is ever scheduled under this policy")]
    NoThroughput,

    /// A policy table violates normalization or feasibility masks.
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    /// A linear solve or LP solve failed beyond tolerance.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// The chain restricted to states reachable from the empty state has more
    /// than one recurrent class, so its long-run behaviour is ambiguous.
    #[error("reducible chain: {0}")]
    AmbiguousChain(String),

    /// No admissible point exists on the eta search grid.
    #[error("synthesis infeasible: {0}")]
    SynthesisInfeasible(String),

    /// Configuration file errors (carry a line number where one applies).
    #[error("config: {0}")]
    Config(String),

    /// Policy CSV parse errors.
    #[error("policy file: {0}")]
    PolicyFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
