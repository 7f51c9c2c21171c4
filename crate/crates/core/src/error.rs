use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    // ingestion
    #[error("no price entry for model `{model}`")]
    MissingPrice { model: String },
    #[error("invalid price entry for model `{model}`: prices must be positive and unique per model")]
    InvalidPrice { model: String },
    #[error("duplicate record for ({dataset}, {index}, {model})")]
    DuplicateRecord { dataset: String, index: u64, model: String },
    #[error("sample ({dataset}, {index}) is missing records for models {missing:?}")]
    IncompleteSample { dataset: String, index: u64, missing: Vec<String> },
    #[error("invalid record ({dataset}, {index}, {model}): {reason}")]
    InvalidRecord { dataset: String, index: u64, model: String, reason: String },
    #[error("dataset `{dataset}` has {count} samples; at least 10 are required to split")]
    TooFewSamples { dataset: String, count: usize },

    // binary container / embeddings
    #[error("format error: {0}")]
    Format(String),
    #[error("row count mismatch: expected {expected}, found {found}")]
    RowCountMismatch { expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("manifest mismatch at row {row}: expected {expected}, found {found}")]
    ManifestMismatch { row: usize, expected: String, found: String },

    // soft labels
    #[error("row has no correct model")]
    NoCorrectModel,
    #[error("brute-force oracle supports at most 4 correct models, got {0}")]
    UnsupportedArity(usize),

    // routing
    #[error("split `{0}` is empty")]
    EmptySplit(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("every centroid is empty")]
    AllCentroidsEmpty,
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("non-finite gradient at step {step}")]
    DivergedGradient { step: usize },

    // metrics / pareto
    #[error("expected {expected} decisions, got {found}")]
    DecisionCountMismatch { expected: usize, found: usize },
    #[error("throughput measured over a zero duration")]
    ZeroDuration,
    #[error("empty input")]
    EmptyInput,
    #[error("frontier fit needs at least 3 points with distinct costs, got {found}")]
    InsufficientPoints { found: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
