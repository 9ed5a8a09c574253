use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite sample at (trial {trial}, channel {channel}, time {time})")]
    NonFinite {
        trial: usize,
        channel: usize,
        time: usize,
    },

    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("insufficient history at t = {t} for order {order}; earliest valid t is {earliest}")]
    InsufficientHistory {
        t: usize,
        order: usize,
        earliest: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unstable coefficient set: companion spectral radius {radius:.6} >= 1")]
    Unstable { radius: f64 },

    #[error("degenerate detection signal: standard deviation is zero")]
    DegenerateSignal,

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("singular cross-trial design at t = {t}")]
    SingularFit { t: usize },

    #[error("insufficient trials: {trials} available, more than {required} needed")]
    DegreesOfFreedom { trials: usize, required: usize },

    #[error("bootstrap failed: {failed} of {total} replicates could not be fitted")]
    BootstrapFailure { failed: usize, total: usize },

    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (configuration, missing files,
    /// malformed data) as opposed to failures while computing.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Config { .. } | Error::Format { .. } | Error::Io { .. } => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

/// Attaches a pipeline stage name to errors.
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
