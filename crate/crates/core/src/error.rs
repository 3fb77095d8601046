use thiserror::Error;

use crate::distribution::DiscreteDistribution;
use crate::lp::LpError;
use crate::transport::TransportCertificate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected length {expected}, got {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid {field}: {reason}")]
    InvalidInput { field: String, reason: String },

    #[error(
        "function is not increasing along axis {axis}: value {lower_value} at {lower:?} \
         exceeds {upper_value} at {upper:?}"
    )]
    NotMonotone {
        axis: usize,
        lower: Vec<usize>,
        upper: Vec<usize>,
        lower_value: f64,
        upper_value: f64,
    },

    #[error("atom {atom} of marginal {marginal} is not a point of grid axis {marginal}")]
    Alignment { marginal: usize, atom: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(
        "no linear majorant with bound {bound}: the law {adversary:?} gives expectation {expectation}"
    )]
    MajorantInfeasible {
        bound: f64,
        expectation: f64,
        adversary: DiscreteDistribution,
    },

    #[error(
        "merging function is not valid at grid scale: worst-case expectation {} exceeds 1",
        .certificate.primal_value
    )]
    NotValid {
        certificate: Box<TransportCertificate>,
    },

    #[error("separable dual does not dominate F: shortfall {shortfall} at node {node:?}")]
    DualInfeasible { node: Vec<usize>, shortfall: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("instance too large: {size} exceeds limit {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error(transparent)]
    Solver(#[from] LpError),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
