use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes between the declared dimensions and the supplied data.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Input is structurally fine but violates an admissibility requirement.
    #[error("not admissible: {0}")]
    Admissibility(String),

    #[error("argument outside the transform domain U: {0}")]
    Domain(String),

    /// A moment or integral requested from a jump measure is infinite.
    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("riccati solver failed at t = {time}: {reason}")]
    Riccati { time: f64, reason: String },

    #[error("simulated state exceeded 1e12 at t = {time}")]
    Explosion { time: f64 },

    #[error("optimal transport problem too large: {0}x{1} points (limit 1e6 pairs); subsample first")]
    TooLarge(usize, usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
