//! Error type shared by every module in the crate.

use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Everything that can go wrong when validating inputs or running the
/// numerical routines. Every variant carries enough context to name the
/// offending operand, row, or column in its message.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// A matrix was constructed with zero rows or zero columns.
    EmptyMatrix { context: &'static str },
    /// The backing buffer length does not match `rows * cols`.
    DataLength { rows: usize, cols: usize, len: usize },
    /// Two operands have incompatible shapes for the named operation.
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A NaN or infinity appeared where a finite value is required.
    NonFinite {
        context: &'static str,
        row: usize,
        col: usize,
    },
    /// A scalar result that must be finite was NaN or infinite.
    NonFiniteScalar { context: &'static str },
    /// Every entry of the given row is masked out, so the row cannot be
    /// normalized.
    MaskedRow { row: usize },
    /// Every entry of the given column is masked out.
    MaskedColumn { col: usize },
    /// A row sums to zero where a positive row sum is required.
    ZeroRow { row: usize },
    /// A column sums to zero where a positive column sum is required.
    ZeroColumn { col: usize },
    /// A negative entry appeared where only nonnegative values are valid.
    NegativeEntry {
        context: &'static str,
        row: usize,
        col: usize,
    },
    /// Per-head dimension times head count does not match the model width.
    HeadGeometry {
        head_dim: usize,
        heads: usize,
        model_dim: usize,
    },
    /// A head index is out of range.
    HeadIndex { head: usize, heads: usize },
    /// A hybrid mixing weight lies outside `[0, 1]`.
    HybridWeight { value: f64 },
    /// The prior vector length does not match the number of mixture centers.
    PriorsLength { expected: usize, found: usize },
    /// The prior vector does not sum to 1 within tolerance.
    PriorsSum { sum: f64 },
    /// A matrix expected to be row-stochastic has a row that does not sum
    /// to 1 within tolerance.
    NotRowStochastic { row: usize, sum: f64 },
    /// A backward pass was handed a cache built by a different scheme.
    CacheScheme {
        cached: &'static str,
        requested: &'static str,
    },
    /// Catch-all for scalar argument violations (non-positive tolerances,
    /// zero iteration budgets, and similar).
    InvalidArgument { context: &'static str },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyMatrix { context } => {
                write!(f, "{context}: matrix must have at least one row and one column")
            }
            Error::DataLength { rows, cols, len } => {
                write!(f, "data length {len} does not match {rows}x{cols} = {}", rows * cols)
            }
            Error::ShapeMismatch { op, left, right } => write!(
                f,
                "{op}: left operand is {}x{} but right operand is {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::NonFinite { context, row, col } => {
                write!(f, "{context}: non-finite value at row {row}, column {col}")
            }
            Error::NonFiniteScalar { context } => {
                write!(f, "{context}: value is not finite")
            }
            Error::MaskedRow { row } => {
                write!(f, "row {row} is fully masked; cannot normalize over an empty row")
            }
            Error::MaskedColumn { col } => {
                write!(f, "column {col} is fully masked; cannot normalize over an empty column")
            }
            Error::ZeroRow { row } => write!(f, "row {row} sums to zero; cannot normalize"),
            Error::ZeroColumn { col } => write!(f, "column {col} sums to zero; cannot normalize"),
            Error::NegativeEntry { context, row, col } => {
                write!(f, "{context}: negative entry at row {row}, column {col}")
            }
            Error::HeadGeometry { head_dim, heads, model_dim } => write!(
                f,
                "head dimension {head_dim} times head count {heads} must equal model width {model_dim}"
            ),
            Error::HeadIndex { head, heads } => {
                write!(f, "head index {head} out of range for {heads} heads")
            }
            Error::HybridWeight { value } => {
                write!(f, "hybrid weight {value} lies outside [0, 1]")
            }
            Error::PriorsLength { expected, found } => {
                write!(f, "expected {expected} priors, found {found}")
            }
            Error::PriorsSum { sum } => {
                write!(f, "priors must sum to 1, got {sum}")
            }
            Error::NotRowStochastic { row, sum } => {
                write!(f, "matrix is not row-stochastic: row {row} sums to {sum}")
            }
            Error::CacheScheme { cached, requested } => {
                write!(f, "cache was built by the {cached} forward pass, not {requested}")
            }
            Error::InvalidArgument { context } => write!(f, "{context}"),
        }
    }
}

impl core::error::Error for Error {}
