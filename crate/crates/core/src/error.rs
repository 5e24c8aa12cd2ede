use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid economy: {0}")]
    InvalidEconomy(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// The network matrix has spectral radius too close to (or above) one.
    #[error("model ill-posed: spectral radius {radius:.6} >= 1 - 1e-9; offending column sums: {offending:?}")]
    IllPosed {
        radius: f64,
        /// `(flat index, column sum)` pairs whose column sum reaches the bound.
        offending: Vec<(usize, f64)>,
    },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("solver did not converge after {iterations} iterations (last update norm {last_norm:.3e}, history length {history_len})")]
    NonConvergence {
        iterations: usize,
        last_norm: f64,
        history_len: usize,
        residuals: Vec<(String, f64)>,
    },

    #[error("nonpositive iterate in {variable} at index {index} (value {value:.3e}); check rho and beta")]
    NegativeIterate {
        variable: &'static str,
        index: usize,
        value: f64,
    },

    #[error("steady-state check failed: {0}")]
    NotSteadyState(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{} not found", .0.display())]
    MissingFile(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}
