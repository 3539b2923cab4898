use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, row {row}: {message}")]
    Data {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("invalid series: {0}")]
    Series(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("battery state of charge {soc} outside [0, {capacity}]")]
    SocBounds { soc: f64, capacity: f64 },

    #[error("simultaneous charge ({charge}) and discharge ({discharge}) in one step")]
    SimultaneousChargeDischarge { charge: f64, discharge: f64 },

    #[error("power limit exceeded: {requested} kWh per step > {limit} kWh")]
    PowerLimit { requested: f64, limit: f64 },

    #[error("thermal capacity exceeded: {requested} kWh_th per step > {limit} kWh_th")]
    ThermalCap { requested: f64, limit: f64 },

    #[error("unit mismatch: expected {expected}, got {actual}")]
    UnitMismatch { expected: String, actual: String },

    #[error("infeasible dispatch in window {window}: {message}")]
    Infeasible { window: usize, message: String },

    #[error("solver failure in window {window}: {message}")]
    Solver { window: usize, message: String },

    #[error("oracle instance too large: {0}")]
    OracleTooLarge(String),

    #[error("configurations do not match: {0}")]
    Mismatch(String),

    #[error("undefined ratio: {0}")]
    Undefined(&'static str),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a window index to window-level failures raised without one.
    pub(crate) fn in_window(self, index: usize) -> Self {
        match self {
            Error::Infeasible { message, .. } => Error::Infeasible {
                window: index,
                message,
            },
            Error::Solver { message, .. } => Error::Solver {
                window: index,
                message,
            },
            other => other,
        }
    }
}
