use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Which orthogonal projector a boundary error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projector {
    /// Π₁, the all-rows-equal (column mean) part.
    Mean,
    /// Π⊥ = I − Π₁, the column-centered part.
    Complement,
}

impl std::fmt::Display for Projector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Projector::Mean => f.write_str("mean projector"),
            Projector::Complement => f.write_str("complement projector"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, found {found}")]
    Shape {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("softmax logits overflowed (non-finite entry at row {row})")]
    Overflow { row: usize },

    #[error("{measure} is undefined: {reason}")]
    UndefinedMeasure {
        measure: &'static str,
        reason: String,
    },

    #[error("{quantity} is undefined at the boundary: {projector} part vanishes")]
    Boundary {
        quantity: &'static str,
        projector: Projector,
    },

    #[error("{quantity} is undefined: token similarity {t_sim} is outside the open interval (0, 1)")]
    SimilarityBoundary { quantity: &'static str, t_sim: f64 },

    #[error("{method} did not converge within {iterations} iterations (last estimate {last})")]
    Convergence {
        method: &'static str,
        iterations: usize,
        last: f64,
    },

    #[error("matrix is not row-stochastic: row {row} {detail}")]
    NotStochastic { row: usize, detail: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::Shape {
            op,
            expected: expected.into(),
            found: found.into(),
        }
    }

    /// True for errors caused by an iterative method running out of budget.
    pub fn is_convergence(&self) -> bool {
        matches!(self, Error::Convergence { .. })
    }
}
