use thiserror::Error;

/// Errors surfaced by the numeric layers.
///
/// Shape and domain violations are programming or configuration errors;
/// `Lapack`, `SingularSystem`, and `DegenerateKernel` report conditions
/// detected at run time on otherwise valid inputs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not Hermitian (deviation {deviation:.3e} exceeds {tol:.3e})")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("LAPACK routine {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },

    #[error("linear system is singular to working precision")]
    SingularSystem,

    #[error("superoperator kernel is degenerate (second null vector with residual {residual:.3e})")]
    DegenerateKernel { residual: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("state validation failed: {0}")]
    InvalidState(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("rate fit failed: {0}")]
    FitFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
