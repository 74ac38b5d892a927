use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("XML parse error at line {line}, column {column}: {message}")]
    Xml { line: u32, column: u32, message: String },

    #[error("invalid workflow document at line {line}: {message}")]
    Document { line: u32, message: String },

    #[error("dependency cycle through task `{0}`")]
    Cycle(String),

    #[error("unknown task reference `{0}`")]
    UnknownReference(String),

    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),

    #[error("workflow graph is empty")]
    EmptyGraph,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no finish time known for predecessor `{0}`")]
    UnknownFinish(String),

    #[error("the VM pool is empty")]
    EmptyPool,

    #[error("no {0} instance is available")]
    NoCandidates(String),

    #[error("plan is incomplete: {0}")]
    IncompletePlan(String),

    #[error("aggregated membership function is identically zero")]
    ZeroAggregate,

    #[error("simulation exceeded {limit} s at t = {at} s without completing the exit task")]
    Watchdog { limit: f64, at: f64 },

    #[error("simulation stalled at t = {0} s with unfinished tasks")]
    Stalled(f64),

    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("invalid catalog: {0}")]
    Catalog(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
