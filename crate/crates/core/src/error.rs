use thiserror::Error;

use crate::topology::AgentId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("topology needs at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("duplicate agent id {0}")]
    DuplicateAgent(AgentId),
    #[error("unknown agent id {0}")]
    UnknownAgent(AgentId),
    #[error("agent {0} is not incident to any edge")]
    IsolatedAgent(AgentId),
    #[error("invalid edge ({0}, {1})")]
    InvalidEdge(AgentId, AgentId),
    #[error("agent {agent} is not an endpoint of edge ({tail}, {head})")]
    NotIncident {
        tail: AgentId,
        head: AgentId,
        agent: AgentId,
    },
    #[error("missing desired copy for edge ({tail}, {head}) at agent {agent}")]
    MissingCopy {
        tail: AgentId,
        head: AgentId,
        agent: AgentId,
    },
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("operation requires an open-chain topology")]
    NotAChain,
    #[error("losing agent {0} would leave fewer than 2 agents")]
    TooFewSurvivors(AgentId),
    #[error("agent {0} was already removed")]
    AlreadyRemoved(AgentId),
    #[error("unknown sigmoid kind '{0}'")]
    UnknownSigmoid(String),
    #[error("position coincides with the target")]
    AtTarget,
    #[error("non-finite derivative in component {component} at t = {time}")]
    NonFiniteDerivative { component: String, time: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),
    #[error("equilibrium search inconclusive: {0}")]
    Inconclusive(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

impl Error {
    /// Failures of the numerics rather than of the input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteDerivative { .. } | Error::Inconclusive(_) | Error::Linalg(_)
        )
    }
}
