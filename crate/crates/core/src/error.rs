use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("no sign change on bracket [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("{what}: no convergence after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("tail integral diverges for decay exponent {alpha} (need alpha > 1)")]
    Divergent { alpha: f64 },

    #[error("Myerson payment diverges for alpha = {alpha} (need alpha > 1)")]
    DivergentPayment { alpha: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("nonpositive cost {value} at index {index}")]
    NonPositiveCost { index: usize, value: f64 },

    #[error("nonpositive bid {value} at index {index}")]
    NonPositiveBid { index: usize, value: f64 },

    #[error("need at least 2 agents, got {0}")]
    TooFewAgents(usize),

    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument {x} outside domain {domain}")]
    Domain { x: f64, domain: String },

    #[error("alpha = {alpha} too small for {n} agents (need alpha > {bound})")]
    AlphaTooSmall { alpha: f64, n: usize, bound: f64 },

    #[error("fewer than two agents with positive value")]
    NoEquilibrium,
}

impl Error {
    /// True for failures of a numerical method, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::NoSignChange { .. }
        )
    }
}
