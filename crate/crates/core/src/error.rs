use thiserror::Error;

use crate::kernel::Diagnostic;
use crate::tree::VertexId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not a tree: {0}")]
    NotATree(String),

    #[error("unknown vertex {0}")]
    UnknownVertex(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("vertex {0} is not terminal")]
    NotTerminal(VertexId),

    #[error("no transition row supplied for vertex {0}")]
    MissingRow(VertexId),

    #[error("vertex {vertex} has {degree} neighbors, a symmetric walk row needs 2")]
    DegreeMismatch { vertex: VertexId, degree: usize },

    #[error("invalid kernel ({} violations, first: {})", .0.len(), .0[0])]
    InvalidKernel(Vec<Diagnostic>),

    #[error("invalid path-class query: {0}")]
    InvalidQuery(String),

    #[error("too large for path enumeration: {0}")]
    TooLarge(String),

    #[error("vertex {0} does not belong to the base tree")]
    NotInLambda(VertexId),

    #[error("vertex {child} is not a child of {parent}")]
    NotAChild { parent: VertexId, child: VertexId },

    #[error("row of vertex {0} is needed but not known yet")]
    MissingKnownRow(VertexId),

    #[error("zero denominator while recovering t({u},{w})")]
    ZeroDenominator { u: VertexId, w: VertexId },

    #[error("recovered t({u},{w}) = {value} lies outside [0,1]")]
    OutOfRange { u: VertexId, w: VertexId, value: f64 },

    #[error("row of vertex {vertex} cannot be completed: complement {complement}")]
    RowSumViolation { vertex: VertexId, complement: f64 },

    #[error("distribution covers t <= {available} but t <= {needed} is required")]
    InsufficientTimeRange { needed: usize, available: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("walk did not reach the outer layer within {0} steps")]
    NonTermination(u64),

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format { line, message: message.into() }
    }
}
