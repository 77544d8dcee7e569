use thiserror::Error;

/// Errors produced by the numerical kernels, geometry and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Input contains NaN or infinite entries, or violates a documented
    /// precondition (e.g. an asymmetric matrix passed to a symmetric solver).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Matrix dimensions do not agree with the operation's contract.
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    /// A factorization could not be completed (rank deficiency, loss of
    /// positive definiteness, ...).
    #[error("factorization failed: {0}")]
    Factorization(String),

    /// A tangent vector was used with a base point it does not belong to.
    #[error("tangent base point mismatch")]
    BaseMismatch,

    /// A subspace logarithm was requested at or too close to the cut locus
    /// (a principal angle within tolerance of pi/2).
    #[error("cut locus: principal angle {angle} at index {index} is within {tol} of pi/2")]
    CutLocus { index: usize, angle: f64, tol: f64 },

    /// The resolvent of a Cayley-type retraction became singular for the
    /// requested step.
    #[error("retraction step too large: resolvent is singular at t = {t}")]
    StepTooLarge { t: f64 },

    /// The curvature form vanished where a Hessian-based step was requested.
    #[error("degenerate curvature: direction has zero second-order term")]
    DegenerateCurvature,

    /// A step-size routine was handed a non-descent direction.
    #[error("not a descent direction: <grad, D> = {inner_product}")]
    NonDescent { inner_product: f64 },

    /// Configuration file rejected.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
