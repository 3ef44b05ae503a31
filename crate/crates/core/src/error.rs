use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("dimension mismatch: expected {expected} components, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("epsilon = {0} is not the reciprocal of a whole number")]
    NotIntegerReciprocal(f64),

    #[error("cell under-resolved: {nodes_per_cell:.2} nodes per cell, at least {required} required")]
    UnderResolved { nodes_per_cell: f64, required: usize },

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("mollification radius {h} below resolution floor {floor}")]
    RadiusBelowResolution { h: f64, floor: f64 },

    #[error("extension radius {h} violates ceiling {ceiling}")]
    RadiusAboveCeiling { h: f64, ceiling: f64 },

    #[error("CFL violated: max|v|*tau = {courant_length:.3e} exceeds spacing; use tau <= {required_tau:.3e}")]
    Cfl { courant_length: f64, required_tau: f64 },

    #[error("conjugate gradients did not converge: {iterations} iterations, relative residual {residual:.3e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("eigen iteration stagnated after {iterations} iterations, residual {residual:.3e}")]
    EigenStagnation { iterations: usize, residual: f64 },

    #[error("empty domain: {0}")]
    EmptyDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate cell problem: no stiffness in strain mode {mode}")]
    Degenerate { mode: String },

    #[error("singular tensor: {0}")]
    Singular(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
