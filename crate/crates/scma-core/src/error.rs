//! Crate-wide error type.
//!
//! All indices in rendered messages are 1-based to match the conventions of
//! the surrounding literature; library APIs themselves are 0-based.

use thiserror::Error;

/// Errors produced by graph construction, codebook assembly, decoding,
/// oracle evaluation, and configuration handling.
#[derive(Debug, Error)]
pub enum Error {
    /// Requested factor-graph dimensions cannot produce a regular graph.
    #[error("infeasible factor graph: {0}")]
    InfeasibleGraph(String),

    /// A row of F has the wrong weight (row index is 1-based).
    #[error("factor graph row {row} has weight {got}, expected d_f = {expected}")]
    IrregularRow {
        row: usize,
        got: usize,
        expected: usize,
    },

    /// A column of F has the wrong weight (column index is 1-based).
    #[error("factor graph column {column} has weight {got}, expected d_v = {expected}")]
    IrregularColumn {
        column: usize,
        got: usize,
        expected: usize,
    },

    /// Two users occupy exactly the same resource set (indices 1-based).
    #[error("factor graph columns {a} and {b} are identical")]
    DuplicateColumns { a: usize, b: usize },

    /// An index argument is outside its valid range (reported 1-based).
    #[error("{what} index {index} out of range 1..={limit}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    /// A numeric parameter that must be strictly positive is not.
    #[error("parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    /// Inputs have inconsistent shapes.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A constellation operator is not a unit-modulus permutation.
    #[error("invalid constellation operator: {0}")]
    InvalidOperator(String),

    /// The operator table is only defined for specific user counts.
    #[error("phase operator table is defined for J = 6 users, got J = {got}")]
    UnsupportedOperatorCount { got: usize },

    /// Two constellation points coincide, so KPI metrics are undefined.
    #[error("degenerate constellation: points {a} and {b} coincide")]
    DegenerateConstellation { a: usize, b: usize },

    /// A bit vector has the wrong length or non-binary entries.
    #[error("invalid bits: {0}")]
    InvalidBits(String),

    /// A decoder configuration violates its invariants.
    #[error("invalid decoder config: {0}")]
    InvalidDecoderConfig(String),

    /// A DMPA grid cannot contain all impulse locations.
    #[error(
        "dmpa grid extent {wid} too small: impulse at |re|,|im| up to {required} \
         (increase wid or leave it unset for automatic sizing)"
    )]
    GridExtent { required: f64, wid: f64 },

    /// The oracle enumeration would exceed its table budget.
    #[error("oracle budget exceeded: M^J = {required} tuples > budget {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    /// A simulation or file configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// An I/O failure with path context.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that indicate a bad configuration rather than a
    /// failure while running; used by callers to map exit codes.
    pub fn is_config(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
