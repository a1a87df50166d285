use thiserror::Error;

/// Failure taxonomy for the whole crate.
///
/// Numerical degeneracies (an SPD solve or a transform breaking down) are
/// kept apart from shape and configuration problems so harness code can
/// classify failures without string matching.
#[derive(Debug, Error)]
pub enum Error {
    /// Non-finite entries or values outside the operation's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Dimension mismatch between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Bad run configuration (lengths, missing sections, unparseable files).
    #[error("config error: {0}")]
    Config(String),

    /// Matrix failed the positive-semidefinite check.
    #[error("not positive semidefinite: {0}")]
    NotPsd(String),

    /// Matrix failed the strict positive-definite floor.
    #[error("not positive definite: {0}")]
    NotSpd(String),

    /// An SPD factorization or solve broke down at runtime.
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    /// The ensemble deviation transform could not be formed.
    #[error("transform degeneracy: {0}")]
    TransformDegenerate(String),

    /// Too few usable points for a fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A failure tagged with the filter step it occurred at.
    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wraps the error with the filter step index it occurred at.
    pub fn at_step(self, step: usize) -> Error {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// True when the failure is numerical rather than a shape/config problem.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotPsd(_)
            | Error::NotSpd(_)
            | Error::Degenerate(_)
            | Error::TransformDegenerate(_) => true,
            Error::AtStep { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
