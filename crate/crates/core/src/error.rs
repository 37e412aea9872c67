use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("moment matrix M2 - m1 m1^T is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NonPdMoments { min_eigenvalue: f64 },

    #[error("natural parameters outside the domain: 2(nu+d) + t1^T t2^-1 t1 = {value:e} <= 0")]
    DomainViolation { value: f64 },

    /// The target's escort lacks first or second moments for this family.
    #[error("incompatible target: nu_p + 2(nu_p+d)/(nu+d) = {value} <= 2")]
    Incompatible { value: f64 },

    #[error("Renyi entropy integral diverges: alpha(nu+d) - d = {value} <= 0")]
    EntropyDivergent { value: f64 },

    #[error("integral does not converge: {0}")]
    DivergentIntegral(String),

    #[error("importance weights are degenerate (effective sample size {ess:.2})")]
    DegenerateWeights { ess: f64 },

    #[error("the Gaussian branch has no natural-parameter chart")]
    GaussianChart,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
