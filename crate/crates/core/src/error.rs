use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the modeling chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("river network: {0}")]
    Network(String),

    #[error("solver instability at t={time:.3}s in cell ({i},{j}): {detail}")]
    Instability {
        time: f64,
        i: usize,
        j: usize,
        detail: String,
    },

    #[error("unknown subdomain id {0}")]
    UnknownSubdomain(u32),

    #[error("{0} lies outside the grid")]
    OutsideGrid(String),

    #[error("empty subdomain {0}")]
    EmptySubdomain(u32),

    #[error("time {0}s is not present in the trajectory")]
    MissingTime(f64),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("ensemble: {0}")]
    Ensemble(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Dimension { .. } => "dimension",
            Error::NonFinite(_) => "non_finite",
            Error::Network(_) => "network",
            Error::Instability { .. } => "instability",
            Error::UnknownSubdomain(_) => "unknown_subdomain",
            Error::OutsideGrid(_) => "outside_grid",
            Error::EmptySubdomain(_) => "empty_subdomain",
            Error::MissingTime(_) => "missing_time",
            Error::Metric(_) => "metric",
            Error::Ensemble(_) => "ensemble",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}

pub(crate) fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
