//! Error types shared by the core numerics.

use alloc::string::String;
use core::fmt;

/// Errors produced by matrix arithmetic, the autodiff tape, model
/// construction, and the statistical fitters.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Operand shapes are incompatible for the named operation.
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A matrix dimension was zero.
    EmptyMatrix,
    /// A 1D filter does not fit the signal it is applied to.
    FilterTooLong { filter_len: usize, cols: usize },
    /// `backward` was seeded with a non-scalar node.
    NonScalarLoss { rows: usize, cols: usize },
    /// Elementwise log applied to a non-positive entry.
    LogDomain { value: f64 },
    /// An input entry fell outside the documented domain.
    OutOfRange { value: f64, lo: f64, hi: f64 },
    /// A time series has zero variance; correlation is undefined.
    DegenerateSeries { index: usize },
    /// Samples carry no usable spread for distribution fitting.
    DegenerateSample,
    /// Too few samples for a fit to be meaningful.
    TooFewSamples { required: usize, got: usize },
    /// An iterative solver did not converge.
    NoConvergence { iterations: usize },
    /// A gradient contained NaN or infinity.
    NonFiniteGradient,
    /// A model or layer description violates its invariants.
    InvalidConfig(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch { op, left, right } => write!(
                f,
                "shape mismatch in {op}: {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            CoreError::EmptyMatrix => write!(f, "matrix dimensions must be at least 1x1"),
            CoreError::FilterTooLong { filter_len, cols } => write!(
                f,
                "filter of length {filter_len} too long for {cols} columns (max {})",
                2 * cols + 1
            ),
            CoreError::NonScalarLoss { rows, cols } => {
                write!(f, "backward seed must be 1x1, got {rows}x{cols}")
            }
            CoreError::LogDomain { value } => {
                write!(f, "log requires strictly positive entries, got {value}")
            }
            CoreError::OutOfRange { value, lo, hi } => {
                write!(f, "value {value} outside [{lo}, {hi}]")
            }
            CoreError::DegenerateSeries { index } => {
                write!(f, "series {index} has zero variance")
            }
            CoreError::DegenerateSample => write!(f, "samples are degenerate (no spread)"),
            CoreError::TooFewSamples { required, got } => {
                write!(f, "need at least {required} samples, got {got}")
            }
            CoreError::NoConvergence { iterations } => {
                write!(f, "solver failed to converge after {iterations} iterations")
            }
            CoreError::NonFiniteGradient => write!(f, "non-finite gradient encountered"),
            CoreError::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl core::error::Error for CoreError {}
