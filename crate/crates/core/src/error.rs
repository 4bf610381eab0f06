use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mixture spec: {0}")]
    InvalidSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("parameter vector must have unit norm, got {norm}")]
    NonUnitTheta { norm: f64 },

    #[error("parameter vector is zero")]
    ZeroTheta,

    /// The inner maximization left the configured radius around the input.
    #[error("inner problem diverged at step {step}: |z - x| = {distance} exceeds cap {cap} (objective not concave for this gamma?)")]
    InnerDivergence { step: usize, distance: f64, cap: f64 },

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("loss is not differentiable in the input and offers no search line")]
    NotDifferentiable,

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    TrainingDiverged { epoch: usize, batch: usize },

    #[error("degenerate spectrum: data has zero second moment")]
    DegenerateSpectrum,

    #[error("degenerate eigen-gap: all eigenvalues coincide within tolerance")]
    DegenerateGap,

    #[error("csv row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let row = err
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        Error::Csv {
            row,
            message: err.to_string(),
        }
    }
}
