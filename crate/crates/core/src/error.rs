use thiserror::Error;

/// Errors produced by the modulation, simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("simulation diverged at t = {time:.6e} s (step {step}): {detail}")]
    Diverged {
        time: f64,
        step: usize,
        detail: String,
    },

    #[error("bit source `{0}` exhausted before the end of the simulation")]
    BitsExhausted(&'static str),

    #[error("signal too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("time grid is not uniformly sampled (sample {index} deviates by {deviation:.3e} s)")]
    NonUniformSampling { index: usize, deviation: f64 },

    #[error("frequency {freq:.6e} Hz lies outside the spectrum range [0, {max:.6e}] Hz")]
    OutOfRange { freq: f64, max: f64 },

    #[error("spectra are defined on different frequency grids")]
    GridMismatch,

    #[error("no interior peak in the magnitude response")]
    NoInteriorPeak,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("{file}:{line}: {reason}")]
    Config {
        file: String,
        line: usize,
        reason: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
