use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid field parameters: {0}")]
    InvalidParams(String),

    #[error("centers are not comparable: {0}")]
    CenterMismatch(String),

    #[error("digit {digit} out of range for alphabet of size {q_res}")]
    DigitOutOfRange { digit: u32, q_res: u64 },

    #[error("vectors live on different windows")]
    WindowMismatch,

    #[error("window too large: {vertices} vertices exceeds the limit of {limit}")]
    WindowTooLarge { vertices: u64, limit: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("series did not reach its tail bound within {max_terms} terms")]
    SeriesNotConverged { max_terms: usize },

    #[error("no sign change for root {n} on bracket [{lo}, {hi}]")]
    BracketFailure { n: usize, lo: f64, hi: f64 },

    #[error("iteration did not converge: {0}")]
    NotConverged(String),

    #[error("test function {id} violates the decay hypothesis: {reason}")]
    Inadmissible { id: String, reason: String },

    #[error("the m-sum diverges for s = {s} (needs s > {threshold})")]
    Divergent { s: f64, threshold: f64 },

    #[error("s = {re} + {im}i is a pole of the rational factor")]
    Pole { re: f64, im: f64 },

    #[error("s = {re} + {im}i lies outside Re s > 0")]
    OutOfDomain { re: f64, im: f64 },

    #[error("reliability cutoff {cutoff} covers only {available} of {requested} eigenvalues")]
    CutoffTooLow {
        cutoff: f64,
        available: usize,
        requested: usize,
    },

    #[error("seminorm comparison violated for {id}: {detail}")]
    SeminormViolation { id: String, detail: String },
}
