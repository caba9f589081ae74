//! Crate-wide error type.

use crate::tree::Split;

/// Errors produced by dataset loading, tree assembly, the LP/MILP solver,
/// and the training driver.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("empty input file: {0}")]
    EmptyFile(String),

    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: usize, message: String },

    #[error("bad schema: {0}")]
    Schema(String),

    #[error("unknown category {value:?} for feature {feature:?}")]
    UnknownCategory { feature: String, value: String },

    #[error("missing value at line {line}, column {column}")]
    MissingValue { line: usize, column: usize },

    #[error("invalid decision path: {0}")]
    InvalidPath(String),

    #[error("paths disagree at node {node}: {left} vs {right}")]
    PathDisagreement { node: usize, left: Split, right: Split },

    #[error("bad model file: {0}")]
    ModelFormat(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure in simplex: {0}")]
    Numerical(String),

    #[error("solver deadline expired")]
    Deadline,

    #[error("linear program is unbounded where a bounded one was required")]
    UnexpectedUnbounded,

    #[error("infeasible warm start: {0}")]
    InfeasibleWarmStart(String),

    #[error("no distinct split available to pad node {node}")]
    PaddingExhausted { node: usize },

    #[error("column uses split {split} not present in S_{node}")]
    SplitOutsideRestriction { node: usize, split: Split },

    #[error("missing dual value for (leaf {leaf}, node {node}, {split})")]
    MissingDual { leaf: usize, node: usize, split: Split },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
