use thiserror::Error;

/// Errors raised by the approximation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown shape `{0}`")]
    UnknownShape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("point lies outside the chart domain: {0}")]
    OutsideDomain(String),

    #[error("not graphical in the target frame: {0}")]
    NotGraphical(String),

    #[error("covering violated: {0}")]
    Covering(String),

    #[error("point outside the partition domain W")]
    OutsideW,

    #[error("chart {chart}: {message}")]
    Geometry { chart: usize, message: String },

    #[error("below m0: {0}")]
    BelowM0(String),

    #[error("transversality margin violated at chart {chart}: {margin:.3e} < {floor:.3e}")]
    Margin { chart: usize, margin: f64, floor: f64 },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("radius {r} exceeds r0 = {r0}")]
    RadiusTooLarge { r: f64, r0: f64 },

    #[error("{0}")]
    Unsupported(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
