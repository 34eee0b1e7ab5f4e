use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum SnnkError {
    #[error("no vetted closed-form Fourier transform for {0}")]
    UnsupportedClosedForm(String),
    #[error("quadrature did not converge at xi = {xi}: refinement disagreement {disagreement:e} > {tolerance:e}")]
    QuadratureNonConvergent {
        xi: f64,
        disagreement: f64,
        tolerance: f64,
    },
    #[error("proposal does not match component support: {0}")]
    ProposalMismatch(String),
    #[error("feature layouts differ")]
    LayoutMismatch,
    #[error("decomposition is not purely atomic")]
    NotAtomic,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("arc-cosine kernel is undefined for a zero vector")]
    ZeroVector,
    #[error("normal equations are singular")]
    SingularSystem,
    #[error("training diverged at epoch {epoch}: loss {loss:e} exceeds 10x the initial {initial:e}")]
    DivergenceDetected { epoch: usize, loss: f64, initial: f64 },
    #[error("activation {0} is not supported here")]
    UnsupportedActivation(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SnnkError>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(SnnkError::ShapeMismatch(msg.into()))
}
