use thiserror::Error;

use crate::expr::{DomainError, ParseError};

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot parse `{field}`: {source}")]
    Parse {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed config file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("coefficient evaluation failed: {0}")]
    Domain(#[from] DomainError),
    #[error("invalid strategy: {0}")]
    Strategy(String),
    #[error("problem fails validation: {0}")]
    Validation(String),
    #[error("domain too small: stationary mass {tail_mass:.3e} outside the core exceeds {tolerance:.3e}")]
    DomainTooSmall { tail_mass: f64, tolerance: f64 },
    #[error("log-density weight is not finite at x = {x}")]
    NonFiniteWeight { x: f64 },
    #[error(
        "right-hand side is not centered: total imbalance {imbalance:.3e} exceeds {tolerance:.3e}"
    )]
    NotCentered { imbalance: f64, tolerance: f64 },
    #[error("path {path} exploded at t = {time}: |X| = {x:.3e}")]
    PathExplosion { path: usize, time: f64, x: f64 },
    #[error("malformed table: {0}")]
    Table(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
