use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parameters violate the Bennett proportionality (residual {residual:e})")]
    NotBennett { residual: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("precondition violated: {0}")]
    Precondition(#[from] KinematicsError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("sweep converged on {converged} of {frames} frames, below the assemblability threshold")]
    InsufficientCoverage { converged: usize, frames: usize },
    #[error("cutoff harmonic {fc} must be below half the frame count {frames}")]
    CutoffTooHigh { fc: usize, frames: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalizeError {
    #[error("sample has non-positive a23 = {0}")]
    InvalidSample(f64),
    #[error("cannot compute a percentile of an empty training split")]
    EmptySplit,
    #[error("scale constant must be positive, got {0}")]
    InvalidScale(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction count {preds} does not match ground-truth count {gts}")]
    LengthMismatch { preds: usize, gts: usize },
    #[error("trajectory shape mismatch at sample {0}")]
    ShapeMismatch(usize),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{0}")]
    Format(String),
}
