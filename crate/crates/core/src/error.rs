use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid problem:\n{0}")]
    Invalid(ValidationReport),

    #[error("{what} size {size} exceeds cap {cap}")]
    CapExceeded { what: &'static str, size: u128, cap: u128 },

    #[error("agent index {index} out of range 1..={agents}")]
    AgentIndex { index: usize, agents: usize },

    #[error("level process decreases from parent to node {node}")]
    NonMonotoneLevel { node: String },

    #[error("level {level} at node {node} is outside [0, {agents}]")]
    LevelOutOfRange { node: String, level: f64, agents: usize },

    #[error("contract {value} is below the terminal payoff {terminal} at leaf {node}")]
    Inadmissible { node: String, value: f64, terminal: f64 },

    #[error("no value supplied for node {0:?}")]
    MissingNode(String),

    #[error("unknown node path {0:?}")]
    UnknownNode(String),

    #[error("agent rates are not strictly increasing: {0:?}")]
    RateOrdering(Vec<f64>),

    #[error("operation requires a lattice model")]
    NotLattice,

    #[error("coarse grid is not a subset of the reference grid: {0}")]
    NotSubgrid(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Io(_) => 1,
            Error::CapExceeded { .. } => 3,
            _ => 2,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
