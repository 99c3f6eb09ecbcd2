use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlatoonError {
    #[error("position {s} m outside route range [0, {length}] m")]
    OutOfRange { s: f64, length: f64 },

    #[error("no segment from node {from} to node {to}")]
    Connectivity { from: u32, to: u32 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("power {power} W outside [{min}, {max}] W")]
    PowerBound { power: f64, min: f64, max: f64 },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("passage log does not cover position {s} m")]
    InsufficientHistory { s: f64 },

    #[error("safety violation: vehicle {index} spacing {spacing:.3} m at t = {time:.1} s")]
    SafetyViolation { index: usize, spacing: f64, time: f64 },

    #[error("records cover mismatched windows: {0}")]
    Window(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("no merge: {0}")]
    NoMerge(String),

    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PlatoonError>;
