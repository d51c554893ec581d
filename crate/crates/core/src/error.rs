use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("entry {entry:?}: shape {shape:?} holds {expected} values but {actual} were given")]
    ShapeValueMismatch {
        entry: String,
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("duplicate entry name {0:?}")]
    DuplicateEntryName(String),
    #[error("entry {entry:?}: value at index {index} is not finite, serialization refused")]
    NonFiniteValue { entry: String, index: usize },
    #[error("schema mismatch at entry {index}: {left} vs {right}")]
    SchemaMismatch {
        index: usize,
        left: String,
        right: String,
    },
    #[error("malformed canonical bytes: {0}")]
    MalformedBytes(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("no client updates to aggregate")]
    NoUpdates,
    #[error("trimmed mean over {n} clients with trim fraction {trim_fraction} leaves no values")]
    TrimTooAggressive { n: usize, trim_fraction: f64 },
    #[error("krum needs at least f + 3 = {needed} clients, got {n}")]
    KrumTooFewClients { n: usize, needed: usize },
    #[error("empty dataset shard")]
    EmptyShard,
    #[error("window length {window_len} exceeds record length {record_len}")]
    WindowTooLong {
        window_len: usize,
        record_len: usize,
    },
    #[error("more clients ({clients}) than windows ({windows})")]
    TooManyClients { clients: usize, windows: usize },
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("proposal rejected: {0}")]
    ProposalRejected(String),
    #[error("ledger: {0}")]
    Ledger(String),
    #[error(transparent)]
    CsvRead(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
