use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate batch statistics: batch-statistics mode needs at least 2 rows, got {0}")]
    DegenerateBatch(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("diverged: non-finite values in {0}")]
    Diverged(&'static str),
    #[error("adaptation diverged: non-finite activations")]
    AdaptationDiverged,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("truncated checkpoint")]
    TruncatedCheckpoint,
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("interval closed: selector already saw {0} items this interval")]
    IntervalClosed(usize),
    #[error("budget overrun: {consumed} of {allocated} units already consumed")]
    BudgetOverrun { consumed: usize, allocated: usize },
    #[error("out-of-order interval: {got} appended after {last}")]
    OutOfOrderInterval { got: u32, last: u32 },
    #[error("no observations for interval {0}")]
    NoObservations(u32),
    #[error("no culprit: no tagged mismatches since interval {0}")]
    NoCulprit(u32),
    #[error("allocated budget is zero")]
    ZeroAllocation,
    #[error("unresolvable item id {0}")]
    UnresolvableId(u64),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
