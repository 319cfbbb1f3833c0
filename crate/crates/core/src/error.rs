use thiserror::Error;

/// Errors shared across the quantization and classical-oracle modules.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("representation mismatch: half-shift vectors differ, bases are not comparable")]
    RepresentationMismatch,
    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("operators live on different truncation windows")]
    WindowMismatch,
    #[error("function is not affine in the action variables")]
    NotAffine,
    #[error("analytic Hamiltonian undefined on the shifted lattice: {0}")]
    AnalyticDomainViolation(String),
    #[error("path domain error: {0}")]
    PathDomainError(String),
    #[error("axis consistency error: {0}")]
    AxisConsistencyError(String),
    #[error("perturbation does not commute with the Hamiltonian (commutator norm {norm:e})")]
    NonCommutingPerturbation { norm: f64 },
    #[error("no closed orbit at this energy (turning points not found)")]
    OpenOrbit,
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("non-finite derivative encountered during integration")]
    NonFiniteDerivative,
    #[error("polynomial fit failure: {0}")]
    FitFailure(String),
    #[error("parse error: {0}")]
    ParseError(String),
}

pub type Result<T> = std::result::Result<T, Error>;
