use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The rotation part left the neighbourhood where exp/log are bijective.
    #[error("rotation angle {angle} rad is outside the logarithm chart (limit pi - 1e-6)")]
    OutOfChart { angle: f64 },

    #[error("matrix is not an element of the Lie algebra (entry ({row}, {col}) = {value:e})")]
    NotInAlgebra { row: usize, col: usize, value: f64 },

    #[error("covariance is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid position for gravity model: |p| = {norm} m")]
    InvalidPosition { norm: f64 },

    #[error("innovation covariance is singular")]
    SingularInnovation,

    #[error("smoother gain undefined: predicted covariance at epoch {epoch} is singular")]
    SmootherGain { epoch: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("inputs are misaligned: {0}")]
    Misaligned(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error("heading fit is not convex (curvature {curvature:e}); guesses bracket no minimum")]
    NonConvexFit { curvature: f64 },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no measurements: {0}")]
    NoMeasurements(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("Monte Carlo run failed: {diverged} of {trials} trials diverged (limit 5%)")]
    TooManyDivergences { diverged: usize, trials: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

/// Tags errors coming out of a pipeline stage with the stage name.
pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
