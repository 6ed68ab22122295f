use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("price at index {index} is not strictly positive: {value}")]
    NonPositivePrice { index: usize, value: f64 },

    #[error("price series needs at least 2 closes, got {0}")]
    TooFewPrices(usize),

    #[error("labels and prices differ in length ({labels} vs {prices})")]
    LabelMismatch { labels: usize, prices: usize },

    #[error("return at index {index} is {value}, returns must be greater than -1")]
    ReturnBelowMinusOne { index: usize, value: f64 },

    #[error("return series is empty")]
    EmptyReturns,

    #[error(
        "returns need at least one negative and one positive value so that \
         -1 < x_min < 0 < x_max (got x_min = {x_min}, x_max = {x_max})"
    )]
    SupportSign { x_min: f64, x_max: f64 },

    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("horizon must be at least 1")]
    ZeroHorizon,

    #[error("invalid account state: {0}")]
    InvalidState(String),

    #[error("account ruined: value {value} is not positive after applying profit")]
    Ruin { value: f64 },

    #[error("drawdown cap must lie in (0, 1), got {0}")]
    InvalidCap(f64),

    #[error("vector length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("operation needs a single-asset support box, got {0} assets")]
    NotScalar(usize),

    #[error("gain {gamma:?} is not admissible: {reason}")]
    InadmissibleGain { gamma: Vec<f64>, reason: String },

    #[error("return {value} at step {step} (asset {asset}) lies outside the support box [{lo}, {hi}]")]
    OutOfSupport { step: usize, asset: usize, value: f64, lo: f64, hi: f64 },

    #[error(
        "exact enumeration needs {sequences} sequences, above the budget of {budget}; \
         use Monte-Carlo mode"
    )]
    BudgetExceeded { sequences: f64, budget: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("effective gain interval is empty: [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("split index {index} out of range 1..={max}")]
    BadSplit { index: usize, max: usize },

    #[error("reports cover different windows: {0}")]
    WindowMismatch(String),

    #[error("io: {0}")]
    Io(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error("json: {0}")]
    Json(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
