use thiserror::Error;

use crate::tree::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("malformed linear program: {0}")]
    MalformedProgram(String),
    #[error("numerical breakdown in simplex: {0}")]
    NumericalBreakdown(String),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("invalid stopping time: {0}")]
    InvalidStoppingTime(String),
    #[error("node {0} does not belong to the tree")]
    ForeignNode(NodeId),
    #[error("stopping times are not ordered: {0}")]
    NotOrdered(String),
    #[error("claim is not measurable at the requested stopping time: {0}")]
    InvalidClaim(String),
    #[error("zero conditioning mass on atom {0}")]
    ZeroConditioningMass(NodeId),
    #[error("empty list")]
    EmptyList,
    #[error("mass mismatch at atom {0}: second measure gives it no mass")]
    MassMismatch(NodeId),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid scenario model: {0}")]
    InvalidModel(String),
    #[error("enumeration of {count} items exceeds cap {cap}")]
    EnumerationOverflow { count: u128, cap: u64 },
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("inconsistent no-free-lunch verdicts: {0}")]
    InconsistentVerdicts(String),
    #[error("no martingale measure exists for the reference assets")]
    NoMartingaleMeasure,
    #[error("good-deal constraints exclude every martingale measure")]
    EmptyGoodDealSet,
    #[error("invalid market data: {0}")]
    InvalidMarket(String),
    #[error("unbounded one-step problem at node {0}")]
    UnboundedNodeLp(NodeId),
}
