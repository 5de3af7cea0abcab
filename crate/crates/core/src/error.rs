use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Process exit codes shared by the CLI and the C ABI.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const RUNTIME: i32 = 1;
    pub const INVALID_INPUT: i32 = 2;
    pub const TOLERANCE: i32 = 3;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{key}: {message}")]
    Config { key: String, message: String },

    #[error(
        "truncation deficit {deficit:.3e} in mode {mode} exceeds the trace tolerance; \
         truncation_dim >= {required_dim} is needed"
    )]
    Truncation {
        mode: usize,
        deficit: f64,
        required_dim: usize,
    },

    #[error("quadrature wavefunction order {0} is above the stable ceiling of 199")]
    WavefunctionOrder(usize),

    #[error(
        "distribution mass outside the grid is {mass_outside:.3e} (limit 1e-4); \
         try f_max >= {suggested_f_max:.3}"
    )]
    GridTooCoarse {
        mass_outside: f64,
        suggested_f_max: f64,
    },

    #[error("control-grid coverage: {0}")]
    Coverage(String),

    #[error(
        "detector efficiency eta = {eta} < 1 needs a regularization filter; \
         pass a radial cutoff (for example --filter-ycut 6)"
    )]
    FilterRequired { eta: f64 },

    #[error(
        "noise amplification bound {bound:.3e} at y_cut = {y_cut} and eta = {eta} exceeds \
         the ceiling {ceiling:.3e}; lower y_cut or use a detector with larger eta"
    )]
    Amplification {
        bound: f64,
        ceiling: f64,
        y_cut: f64,
        eta: f64,
    },

    #[error("phase averaging: {0}")]
    PhaseCoverage(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("setting {index:?}: {source}")]
    Setting {
        index: Vec<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Exit code class: 2 for bad input, 1 for failures during computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_)
            | Error::Config { .. }
            | Error::GridMismatch(_)
            | Error::Format { .. }
            | Error::Io { .. }
            | Error::Truncation { .. }
            | Error::WavefunctionOrder(_) => exit::INVALID_INPUT,
            Error::Setting { source, .. } => source.exit_code(),
            Error::GridTooCoarse { .. }
            | Error::Coverage(_)
            | Error::FilterRequired { .. }
            | Error::Amplification { .. }
            | Error::PhaseCoverage(_) => exit::RUNTIME,
        }
    }
}
