use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("divergent tail mass: kappa + tilt = 0 together with gamma = 0 has no finite tail")]
    DivergentTail,

    #[error("tail-mass inversion failed for xi = {xi} (a = {a}, gamma = {gamma}, rate = {rate})")]
    NumericalInversion { xi: f64, a: f64, gamma: f64, rate: f64 },

    #[error("atom series exceeded the hard cap of {cap} jumps before reaching epsilon = {epsilon}")]
    TruncationCap { cap: usize, epsilon: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },

    #[error("calibration target {target} unreachable within parameter bounds [{lo}, {hi}]")]
    CalibrationRange { target: f64, lo: f64, hi: f64 },

    #[error("degenerate bandwidth: data has zero variance")]
    DegenerateBandwidth,

    #[error("grid mismatch: expected {expected} points, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
