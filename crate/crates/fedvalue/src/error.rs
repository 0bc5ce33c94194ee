//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid generator spec, split plan, flip ratio or experiment config.
    #[error("configuration error: {0}")]
    Config(String),

    /// The sample pool cannot satisfy the requested split composition.
    #[error("split error: client {client} needs {needed} subgroup-{subgroup} samples, pool has {available}")]
    SplitDeficit {
        client: usize,
        subgroup: &'static str,
        needed: usize,
        available: usize,
    },

    /// Local training produced a non-finite loss.
    #[error("training error: non-finite loss at epoch {epoch}, batch {batch}{}", round_ctx(.round))]
    Training {
        epoch: usize,
        batch: usize,
        round: Option<usize>,
    },

    /// A federated run diverged; carries the trace up to the failing round.
    #[error("federated run diverged at round {round}: {source}")]
    RunDiverged {
        round: usize,
        trace: Box<crate::fedsim::FLTrace>,
        #[source]
        source: Box<Error>,
    },

    /// Input vector length does not match the model architecture.
    #[error("shape error: expected length {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    /// Metric undefined on the given inputs (single-class labels, missing subgroup, ...).
    #[error("metric error: {0}")]
    Metric(String),

    /// Too few values for the requested statistic.
    #[error("stats error: {0}")]
    Stats(String),

    /// Utility-table or Shapley computation failure.
    #[error("valuation error: {0}")]
    Valuation(String),

    /// Argument outside the domain of a reward formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// Nothing distributable under the requested reward scheme.
    #[error("allocation error: {0}")]
    Allocation(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    /// Corrupt or incompatible persisted artifact.
    #[error("persistence error: {0}")]
    Persist(String),
}

fn round_ctx(round: &Option<usize>) -> String {
    match round {
        Some(r) => format!(", round {r}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable kind tag, used by the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::SplitDeficit { .. } => "split",
            Error::Training { .. } => "training",
            Error::RunDiverged { .. } => "run_diverged",
            Error::Shape { .. } => "shape",
            Error::Metric(_) => "metric",
            Error::Stats(_) => "stats",
            Error::Valuation(_) => "valuation",
            Error::Domain(_) => "domain",
            Error::Allocation(_) => "allocation",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Persist(_) => "persist",
        }
    }
}
