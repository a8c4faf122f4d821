//! Crate-wide error type.

use std::fmt;
use std::io;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug)]
pub enum Error {
    /// A structure required to be a DAG contains a directed cycle.
    CyclicStructure,
    /// A conditional query's evidence configuration has probability zero.
    ZeroEvidenceProbability,
    /// A CSV label does not belong to the declared value set of its column.
    UnknownLabel { variable: String, label: String },
    /// A CSV data row has the wrong number of fields.
    RaggedRow { line: usize, expected: usize, found: usize },
    /// A CSV file has no header row.
    EmptyFile,
    /// MCAR injection was asked to mask a dataset that already has missing cells.
    AlreadyIncomplete,
    /// A mask/assignment pair (or assignment file) does not line up with its dataset.
    LengthMismatch { expected: usize, found: usize },
    /// Crossover parents have different gene counts.
    ShapeMismatch { left: usize, right: usize },
    /// A missing-data mutation was requested but the dataset is complete.
    NoMissingCells,
    /// No structure mutation is feasible from the current state.
    NoFeasibleMove,
    /// An operation over a population received an empty one.
    EmptyPopulation,
    /// The engine needs at least two individuals.
    PopulationTooSmall { required: usize, found: usize },
    /// A parent set exceeds the configured maximum.
    ParentLimitExceeded { variable: usize, size: usize, max_parents: usize },
    /// All chains are constant after burn-in; the scale reduction is undefined.
    DegenerateChains,
    /// Log-loss evaluation received a dataset with no cases.
    EmptyHoldout,
    /// A trace has no recorded structure digests to compute diversity from.
    DigestsAbsent,
    /// A percentile interval needs at least two samples.
    TooFewSamples { required: usize, found: usize },
    /// A configuration invariant was violated.
    InvalidConfig(String),
    /// A text input (network file, CSV, assignment file) failed to parse.
    Parse { line: usize, message: String },
    /// Underlying I/O failure.
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::CyclicStructure => write!(f, "structure contains a directed cycle"),
            Self::ZeroEvidenceProbability => {
                write!(f, "evidence configuration has probability zero")
            }
            Self::UnknownLabel { variable, label } => {
                write!(f, "unknown label '{label}' for variable '{variable}'")
            }
            Self::RaggedRow { line, expected, found } => {
                write!(f, "line {line}: expected {expected} fields, found {found}")
            }
            Self::EmptyFile => write!(f, "file has no header row"),
            Self::AlreadyIncomplete => {
                write!(f, "dataset already contains missing cells")
            }
            Self::LengthMismatch { expected, found } => {
                write!(f, "expected {expected} entries, found {found}")
            }
            Self::ShapeMismatch { left, right } => {
                write!(f, "chromosome lengths differ: {left} vs {right}")
            }
            Self::NoMissingCells => write!(f, "dataset has no missing cells"),
            Self::NoFeasibleMove => write!(f, "no feasible structure move"),
            Self::EmptyPopulation => write!(f, "population is empty"),
            Self::PopulationTooSmall { required, found } => {
                write!(f, "population of {found} is below the required {required}")
            }
            Self::ParentLimitExceeded { variable, size, max_parents } => {
                write!(
                    f,
                    "variable {variable} has {size} parents, exceeding the limit of {max_parents}"
                )
            }
            Self::DegenerateChains => {
                write!(f, "all chains are constant after burn-in (converged by degeneracy)")
            }
            Self::EmptyHoldout => write!(f, "holdout dataset has no cases"),
            Self::DigestsAbsent => write!(f, "trace has no structure digests"),
            Self::TooFewSamples { required, found } => {
                write!(f, "need at least {required} samples, found {found}")
            }
            Self::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Self::Parse { line, message } => write!(f, "line {line}: {message}"),
            Self::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Self::Io(e)
    }
}
