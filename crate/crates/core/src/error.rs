use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, QssError>;

#[derive(Debug, Error)]
pub enum QssError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("not an orthogonal projection: {0}")]
    NotProjection(String),

    #[error("not a density matrix: {0}")]
    NotDensity(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("vector length {0} is not a perfect square")]
    NotPerfectSquare(usize),

    #[error("negative time {0} (semigroup is only defined for t >= 0)")]
    NegativeTime(f64),

    #[error("eigensolver did not converge ({} eigenvalues recovered)", partial.len())]
    EigenNonConvergence { partial: Vec<Complex64> },

    #[error("restriction undefined: p0 is not subharmonic (algebraic residual {algebraic:.3e}, semigroup min eigenvalue {semigroup:.3e})")]
    NotSubharmonic { algebraic: f64, semigroup: f64 },

    #[error("absorption limit did not converge up to T = {horizon} (last gap {gap:.3e})")]
    AbsorptionNonConvergence { horizon: f64, gap: f64 },

    #[error("Perron existence failed: no QSS-bearing real eigenvalue (spectral abscissa {abscissa:.6e}, spectrum {spectrum:?})")]
    PerronExistence {
        abscissa: f64,
        spectrum: Vec<Complex64>,
    },

    #[error("Perron uniqueness violated on an irreducible restriction: {0}")]
    PerronUniqueness(String),

    #[error("unraveling kernel rejected: {0}")]
    Kernel(String),

    #[error("no samples: no jumps were observed")]
    NoSamples,

    #[error("jump times must be ordered and lie in [0, horizon]")]
    UnorderedTimes,

    #[error("invalid rate matrix: {0}")]
    InvalidRateMatrix(String),

    #[error("{field}: {message}")]
    Field { field: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl QssError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        QssError::Field {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures that signal an inconsistency between the computed
    /// objects and the theory (as opposed to bad input).
    pub fn is_theory_violation(&self) -> bool {
        matches!(
            self,
            QssError::PerronExistence { .. }
                | QssError::PerronUniqueness(_)
                | QssError::AbsorptionNonConvergence { .. }
                | QssError::EigenNonConvergence { .. }
        )
    }
}
