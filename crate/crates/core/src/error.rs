use thiserror::Error;

/// Errors raised by the geometric kernels, the envelope solver and the checks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{model}: point lies on the cut locus, no unique minimizing geodesic")]
    CutLocus { model: &'static str },

    #[error("tangent vector is not based at the given point")]
    BaseMismatch,

    #[error("missing field metadata: {0}")]
    MetadataMissing(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("{0} is not a Cartan-Hadamard model (see the sphere counterexample)")]
    NotHadamard(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
