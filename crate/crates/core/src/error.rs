use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::solver::ShHrtf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, mapped onto process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Io,
    Data,
    Dimension,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spherical harmonic index: order {n}, degree {m}")]
    InvalidIndex { n: usize, m: i64 },

    #[error("order-{order} transform needs at least {needed} directions, grid has {got}")]
    InsufficientDirections { order: usize, needed: usize, got: usize },

    #[error("basis matrix is rank deficient (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("order mismatch: expected {expected}, got {got}")]
    OrderMismatch { expected: usize, got: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: malformed header at byte {offset}: {reason}")]
    MalformedHeader {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("{path}: malformed record {record}: {reason}")]
    MalformedRecord {
        path: PathBuf,
        record: u64,
        reason: String,
    },

    #[error("{path}: payload holds {got} bytes at offset {offset}, header implies {expected}")]
    PayloadSize {
        path: PathBuf,
        offset: u64,
        expected: u64,
        got: u64,
    },

    #[error("non-finite sample at {location}")]
    NonFinite { location: String },

    #[error("fft size {n_fft} invalid for {taps} taps (must be even and >= taps)")]
    FftSize { n_fft: usize, taps: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("series order {got} below required {required} at {frequency:.1} Hz")]
    SeriesOrder {
        got: usize,
        required: usize,
        frequency: f64,
    },

    #[error("scattering series did not converge at {frequency:.1} Hz with {order} terms")]
    SeriesNotConverged { frequency: f64, order: usize },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss {
        epoch: usize,
        last_finite: Box<ShHrtf>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Machine-readable dotted identifier, stable across releases.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidIndex { .. } => "usage.invalid_index",
            Error::InsufficientDirections { .. } => "grid.insufficient_directions",
            Error::IllConditioned { .. } => "numerical.ill_conditioned",
            Error::Dimension(_) => "grid.dimension",
            Error::OrderMismatch { .. } => "grid.order_mismatch",
            Error::GridMismatch(_) => "grid.mismatch",
            Error::InvalidGrid(_) => "data.invalid_grid",
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => "io.not_found",
            Error::Io { .. } => "io.error",
            Error::MalformedHeader { .. } => "data.malformed_header",
            Error::MalformedRecord { .. } => "data.malformed_record",
            Error::PayloadSize { .. } => "data.dimension",
            Error::NonFinite { .. } => "data.non_finite",
            Error::FftSize { .. } => "usage.fft_size",
            Error::InvalidConfig(_) => "usage.invalid_config",
            Error::EmptySelection(_) => "data.empty_selection",
            Error::SeriesOrder { .. } => "usage.series_order",
            Error::SeriesNotConverged { .. } => "numerical.series_not_converged",
            Error::NonFiniteLoss { .. } => "numerical.non_finite_loss",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self.kind().split('.').next() {
            Some("usage") => ErrorClass::Usage,
            Some("io") => ErrorClass::Io,
            Some("data") => ErrorClass::Data,
            Some("grid") => ErrorClass::Dimension,
            _ => ErrorClass::Numerical,
        }
    }
}
