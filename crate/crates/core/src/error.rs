use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("degenerate coefficient vector: L2 norm {norm:e} below 1e-12")]
    DegenerateCoefficients { norm: f64 },
    #[error("empty index mask for {0}")]
    EmptyMask(&'static str),
    #[error("index {index} out of range for {what} (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("node {0} has degree zero")]
    IsolatedNode(usize),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("matrix is singular or rank deficient (smallest singular value {smallest:e})")]
    Singular { smallest: f64 },
    #[error("zero column {0} in dictionary")]
    ZeroColumn(usize),
    #[error("mismatched configurations: {0}")]
    ConfigMismatch(String),
}
