use crate::metric::PointId;

/// Configuration and payload errors from the metric layer.
#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("payload variant does not match metric config")]
    PayloadVariant,
    #[error("unknown point id {0}")]
    UnknownPoint(PointId),
    #[error("duplicate insert of point id {0}")]
    DuplicatePoint(PointId),
    #[error("invalid metric config: {0}")]
    BadConfig(String),
    #[error("distance matrix error: {0}")]
    Matrix(String),
}

/// Errors while parsing or validating stream files.
#[derive(Debug, thiserror::Error)]
pub enum StreamError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("double insert of id {0}")]
    DoubleInsert(PointId),
    #[error("delete of inactive id {0}")]
    DanglingDelete(PointId),
    #[error("id {0} reused after deletion")]
    IdReuse(PointId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Errors from the per-scale engines.
#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("insert of already active id {0}")]
    DuplicateInsert(PointId),
    #[error("operation on unknown id {0}")]
    UnknownId(PointId),
}

/// Errors from LSH family / index construction.
#[derive(Debug, thiserror::Error)]
pub enum LshError {
    #[error("invalid family parameters: {0}")]
    BadFamily(String),
    #[error("invalid build parameters: {0}")]
    BadBuild(String),
}

/// Errors from the brute-force oracles.
#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("instance too large for brute force: {0}")]
    SizeGuard(String),
    #[error("snapshots differ by more than one vertex")]
    SnapshotDiff,
    #[error("empty snapshot")]
    Empty,
}

/// Errors surfaced by the ladder / harness drivers.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Lsh(#[from] LshError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("verification failure at step {step}: {msg}")]
    Verify { step: usize, msg: String },
    #[error("bad run config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
