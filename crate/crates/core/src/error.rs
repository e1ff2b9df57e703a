use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series are not aligned: {0}")]
    Alignment(String),
    #[error("evaluation window is empty")]
    EmptyWindow,
    #[error("baseline `{method}` has zero MSFE in replication {replication}")]
    DegenerateBaseline { method: String, replication: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("non-finite numeric input: {0}")]
    NumericInput(String),
    #[error("all log-weights are -inf")]
    DegenerateWeights,
    #[error("no candidate forecasts supplied")]
    NoCandidates,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("simulated series exceeded magnitude {limit:e} at t={t}")]
    ExplosiveSeries { t: usize, limit: f64 },
    #[error("search budget exceeded: {0}")]
    Budget(String),
    #[error("missing value at row {row}, column `{column}`")]
    MissingData { row: usize, column: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("replication {index} (seed {seed}) failed: {source}")]
    Replication {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input data rather than bad configuration.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Alignment(_)
            | Error::MissingData { .. }
            | Error::Schema(_)
            | Error::NumericInput(_)
            | Error::InsufficientData(_)
            | Error::EmptyWindow
            | Error::DegenerateBaseline { .. }
            | Error::Io(_) => true,
            Error::Replication { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}
