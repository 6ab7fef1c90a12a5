use thiserror::Error;

/// Errors shared across the library. Diagnostic payloads are plain strings:
/// callers either bubble them to the CLI (machine-readable JSON wrapper) or
/// match on the variant.
#[derive(Debug, Error)]
pub enum Error {
    #[error("evaluation point outside the declared validity box: {0}")]
    OutsideValidityBox(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("not in the stiff regime: d_t of the discriminant at the base point is {0:.3e}")]
    NotStiff(f64),

    #[error("initially elliptic: transition time {t_star:.6e} is negative")]
    InitiallyElliptic { t_star: f64 },

    #[error("root finding did not converge after {steps} steps (last residual {residual:.3e})")]
    NoConvergence { steps: usize, residual: f64 },

    #[error("classification inconclusive: {0}")]
    Inconclusive(String),

    #[error("both candidate pivots vanish at the base point")]
    DegeneratePivot,

    #[error("remainder decomposition failed: {0}")]
    DecompositionFailure(String),

    #[error("series division impossible: {0}")]
    Division(String),

    #[error("majorant series diverges: rho * t = {0} >= 1")]
    PhiDivergence(f64),

    #[error("truncation budget exceeded: {0}")]
    Truncation(String),

    #[error("ODE integrator step underflow at s = {0:.6e} (stiffness)")]
    Stiffness(f64),

    #[error("degenerate least-squares fit: {0}")]
    DegenerateFit(String),

    #[error("fixed-point iteration diverged after {iterations} iterations; last distances {trace:?}")]
    Divergence { iterations: usize, trace: Vec<f64> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid ingestion file: {0}")]
    Ingestion(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
