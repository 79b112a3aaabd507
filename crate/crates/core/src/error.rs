use std::path::PathBuf;

use thiserror::Error;

use crate::wavelet::BasisIndex;

/// Errors raised by basis construction, deconvolution, estimation and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported Daubechies order N = {0} (supported: 2..=10)")]
    UnsupportedOrder(usize),

    #[error("coarse level J = {level} too small for N = {order}: need 2^J >= 2N")]
    CoarseLevelTooSmall { level: u32, order: usize },

    #[error("level {level} outside the available range {min}..={max}")]
    LevelOutOfRange { level: u32, min: u32, max: u32 },

    #[error("basis index {0:?} is not part of this basis")]
    UnknownIndex(BasisIndex),

    #[error("point {x} outside [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("characteristic function nearly vanishes: |q*({u})| = {modulus:e}")]
    VanishingCharFn { u: f64, modulus: f64 },

    #[error("operation requires the smoothness exponent, which {0} noise does not have")]
    MissingSmoothness(&'static str),

    #[error("no stored pair table for {0:?} x {1:?} (cross-level or disjoint supports)")]
    PairNotStored(BasisIndex, BasisIndex),

    #[error("table was built for a different basis or grid: {0}")]
    TableMismatch(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("malformed cache file: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("refusing to overwrite existing output {0} (use force)")]
    OutputExists(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::UnsupportedOrder(_)
            | Error::CoarseLevelTooSmall { .. }
            | Error::Config(_)
            | Error::MissingSmoothness(_)
            | Error::OutputExists(_)
            | Error::Format(_)
            | Error::TableMismatch(_)
            | Error::Io(_) => 1,
            _ => 2,
        }
    }
}
