use std::path::PathBuf;

use crate::market::{TraderId, ValidityClause};
use crate::rational::{ParseRationalError, Rational};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("epsilon must lie strictly between 0 and 1, got {0}")]
    InvalidEpsilon(Rational),

    #[error("degenerate market: offered volume of Good is zero")]
    DegenerateMarket,

    #[error("market has no buyers")]
    NoBuyers,

    #[error("buyer {buyer}: {reason}")]
    InvalidBuyer { buyer: TraderId, reason: String },

    #[error("negative amount {0} is not a valid quantity of Money")]
    NegativeAmount(Rational),

    #[error("prices must be positive, got d = {good}, d' = {right}")]
    NonPositivePrice {
        good: Box<Rational>,
        right: Box<Rational>,
    },

    #[error("all claims are zero")]
    ZeroClaims,

    #[error("unknown rights mechanism `{0}` (expected proportional, cea, cel or uniform)")]
    UnknownMechanism(String),

    #[error("buyer {buyer} has invalid endowments: {clause}")]
    InvalidEndowments {
        buyer: TraderId,
        clause: ValidityClause,
    },

    #[error(
        "solver aborted after {iterations} iterations (guard {guard}); prices failed to settle"
    )]
    NonTermination { iterations: u64, guard: u64 },

    #[error("invalid crisis: {0}")]
    InvalidCrisis(String),

    #[error("crisis round {round}: {source}")]
    CrisisRound {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid rational: {0}")]
    Rational(#[from] ParseRationalError),

    #[error("scenario {path}: {message}")]
    Scenario { path: PathBuf, message: String },

    #[error("trace replay failed at event {index}: {message}")]
    Replay { index: usize, message: String },

    #[error("invalid generator parameters: {0}")]
    Generator(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
