use thiserror::Error;

/// Failure modes of the detection pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The zero vector is not inside the convex hull of the estimating
    /// rows, so no weights can satisfy the moment conditions.
    #[error("moment conditions unattainable: zero is outside the convex hull of {rows} estimating rows")]
    ConvexHull { rows: usize },

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:.3e}): {context}")]
    NonConvergence { context: String, iterations: usize, grad_norm: f64 },

    #[error("degenerate segment: {0}")]
    DegenerateSegment(String),

    #[error("scan failed: {0}")]
    Scan(String),

    #[error("bootstrap failed: {reason} (smallest root modulus {root_modulus:.6})")]
    Bootstrap { reason: String, root_modulus: f64 },
}

pub type Result<T, E = ElError> = std::result::Result<T, E>;

impl ElError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        ElError::Input(msg.into())
    }

    /// True for errors caused by the data or the requested configuration
    /// rather than by the optimizer.
    pub fn is_input_error(&self) -> bool {
        matches!(self, ElError::Input(_) | ElError::Index(_))
    }
}
