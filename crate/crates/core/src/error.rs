//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// An operation received a tensor with zero rows or columns.
    EmptyTensor { op: &'static str },
    /// Incompatible tensor shapes; the message names the operation.
    ShapeMismatch { op: &'static str, detail: String },
    /// An operation produced a NaN or infinity.
    NonFinite { op: &'static str },
    /// Layer norm on a constant row with eps = 0.
    DegenerateVariance,
    /// Dropout rate outside [0, 1).
    InvalidRate(f64),
    /// Credibility parameter outside (0, 1].
    InvalidAlpha(f64),
    /// Backward called twice, or before any operation was recorded.
    BackwardState,
    /// Categorical level not present in the training vocabulary.
    UnknownLevel { covariate: String, level: String },
    /// Robust scaler used before being fitted.
    UnfittedScaler { covariate: String },
    /// Every PLE bin collapsed below the minimum length.
    DegeneratePle { covariate: String },
    /// CLS attention mass P too close to 1 for the credibility decomposition.
    DegenerateDecomposition { p: f64 },
    /// Poisson deviance evaluated at a non-positive frequency.
    NonPositiveMu { index: usize },
    /// Dataset row with exposure <= 0.
    NonPositiveExposure { row: usize },
    /// Dataset row whose claim count is not a nonnegative integer.
    InvalidCount { row: usize },
    /// Split index refers to a row outside the dataset.
    RowOutOfRange { id: usize, rows: usize },
    /// Operation requires a nonempty dataset or record list.
    EmptyInput { what: &'static str },
    /// Ensemble prediction with no members.
    EmptyEnsemble,
    /// Training aborted on a non-finite loss.
    Divergence { epoch: usize, detail: String },
    /// Model and dataset disagree on a schema field.
    SchemaMismatch { field: String },
    /// Invalid model or run configuration.
    Config { detail: String },
    /// Named covariate does not exist.
    UnknownCovariate { name: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyTensor { op } => write!(f, "{op}: empty tensor"),
            Error::ShapeMismatch { op, detail } => write!(f, "{op}: shape mismatch: {detail}"),
            Error::NonFinite { op } => write!(f, "{op}: non-finite result"),
            Error::DegenerateVariance => write!(f, "layer_norm: degenerate variance"),
            Error::InvalidRate(r) => write!(f, "dropout rate {r} outside [0, 1)"),
            Error::InvalidAlpha(a) => write!(f, "credibility alpha {a} outside (0, 1]"),
            Error::BackwardState => write!(f, "backward called before forward or called twice"),
            Error::UnknownLevel { covariate, level } => {
                write!(f, "unknown level {level:?} for covariate {covariate:?}")
            }
            Error::UnfittedScaler { covariate } => {
                write!(f, "robust scaler for {covariate:?} is not fitted")
            }
            Error::DegeneratePle { covariate } => {
                write!(f, "degenerate PLE for {covariate:?}: all bins collapsed")
            }
            Error::DegenerateDecomposition { p } => {
                write!(f, "degenerate decomposition: CLS attention mass P = {p}")
            }
            Error::NonPositiveMu { index } => {
                write!(f, "non-positive frequency at instance {index}")
            }
            Error::NonPositiveExposure { row } => {
                write!(f, "row {row}: exposure must be > 0")
            }
            Error::InvalidCount { row } => {
                write!(f, "row {row}: claim count must be a nonnegative integer")
            }
            Error::RowOutOfRange { id, rows } => {
                write!(f, "split row id {id} out of range for dataset with {rows} rows")
            }
            Error::EmptyInput { what } => write!(f, "empty {what}"),
            Error::EmptyEnsemble => write!(f, "ensemble has no members"),
            Error::Divergence { epoch, detail } => {
                write!(f, "training diverged at epoch {epoch}: {detail}")
            }
            Error::SchemaMismatch { field } => write!(f, "schema mismatch on {field}"),
            Error::Config { detail } => write!(f, "invalid configuration: {detail}"),
            Error::UnknownCovariate { name } => write!(f, "unknown covariate {name:?}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
