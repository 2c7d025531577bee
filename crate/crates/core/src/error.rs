use std::path::PathBuf;

/// Errors produced anywhere in the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {actual} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("singular value decomposition did not converge")]
    SvdNoConvergence,

    #[error("eigendecomposition did not converge")]
    EigenNoConvergence,

    #[error("matrix is rank deficient ({0})")]
    RankDeficient(&'static str),

    #[error("reference signal has zero norm")]
    ZeroReference,

    #[error("true channel has zero norm in trial {0}")]
    ZeroChannel(usize),

    #[error("no outcomes to reduce")]
    EmptyOutcomes,

    #[error("EVM target {target:.3}% unreachable: achievable range over drive gain [1e-3, 1e3] is [{low:.3}%, {high:.3}%]")]
    CalibrationUnreachable { target: f64, low: f64, high: f64 },

    #[error("model has not been trained")]
    Untrained,

    #[error("training order violated: {0}")]
    TrainingOrder(&'static str),

    #[error("model/config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("bad model file {path}: {reason}")]
    ModelFormat { path: PathBuf, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
