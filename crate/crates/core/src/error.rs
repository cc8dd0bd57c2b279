//! Error type shared across the engine.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on user input was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A field value was NaN or infinite where a finite number is required.
    #[error("non-finite value at node {node} ({context})")]
    NonFinite { node: usize, context: &'static str },

    /// Two fields live on different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Option price outside the static no-arbitrage band.
    #[error("price {price} outside no-arbitrage band ({lo}, {hi})")]
    PriceOutOfBand { price: f64, lo: f64, hi: f64 },

    /// An instrument cannot be vega-weighted.
    #[error("instrument {index} rejected: {reason}")]
    InstrumentRejected { index: usize, reason: String },

    /// An iterative linear solve failed to reach its residual target.
    #[error("linear solver stalled: relative residual {residual:.3e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },

    /// Policy iteration on one time slice exceeded its iteration cap.
    #[error("policy iteration exceeded {max_iters} iterations at time slice {slice} (last delta {delta:.3e})")]
    PolicyIterationStalled {
        slice: usize,
        max_iters: usize,
        delta: f64,
    },

    /// The forward density lost more mass than discounting accounts for.
    #[error("density mass leak {leak:.3e} at step {step} exceeds 1% beyond discounting")]
    MassLeak { step: usize, leak: f64 },

    /// The sequential cost is undefined for this reference configuration.
    #[error("sequential cost domain error: reference variance {sigma_bar_sq} must exceed rho_ref^2 * sigma_r^2 = {floor}")]
    SequentialDomain { sigma_bar_sq: f64, floor: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
