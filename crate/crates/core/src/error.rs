use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown scheme `{name}`; available: {available}")]
    UnknownScheme { name: String, available: String },

    #[error("invalid tableau: {0}")]
    InvalidTableau(String),

    #[error("order p = {0} is not supported (1 <= p <= 3)")]
    UnsupportedOrder(usize),

    #[error("lambda*I + A is singular at diagonal entry {index} (lambda + a_ii = {value:e})")]
    SingularMatrix { index: usize, value: f64 },

    #[error("invalid velocity grid: {0}")]
    Grid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate state: density {rho:e} leaves the temperature undefined")]
    DegenerateState { rho: f64 },

    #[error("invalid moments: rho = {rho:e}, T = {temperature:e}")]
    InvalidMoments { rho: f64, temperature: f64 },

    #[error("negative density {value:e} at node {index}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("invalid Euler state in cell {cell}: {reason}")]
    InvalidState { cell: usize, reason: String },

    #[error("numerical blow-up at {} (lambda = {lambda:e})", stage_label(*.stage))]
    BlowUp { stage: Option<usize>, lambda: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

fn stage_label(stage: Option<usize>) -> String {
    match stage {
        Some(i) => format!("stage {i}"),
        None => "final level".to_string(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_blow_up(&self) -> bool {
        matches!(self, Error::BlowUp { .. })
    }

    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::UnknownScheme { .. }
                | Error::Parse { .. }
                | Error::Grid(_)
                | Error::InvalidTableau(_)
        )
    }
}
