//! Fixed spatial mixing filter derived from the farm correlation matrix.
//!
//! The filter entry is `(e^{|c|} - 1) / (e - 1)`, a strictly increasing map
//! of the absolute correlation onto `[0, 1]` that widens the gap between
//! weakly and strongly correlated pairs relative to using `|c|` directly.
//! The filter is never trained: it is computed once from data and shared by
//! every layer of both networks.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::matrix::Matrix;
use crate::stats::CorrelationMatrix;

/// How the mixing weights are derived from correlation coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// `(e^{|c|} - 1) / (e - 1)`.
    Exponential,
    /// `|c|`, kept as an ablation baseline.
    Absolute,
}

/// Fixed N x N spatial mixing matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFilter {
    entries: Matrix,
}

/// Scalar form of the exponential transform.
pub fn exponential_weight(c: f64) -> f64 {
    let a = libm::fabs(c);
    if a >= 1.0 {
        // Pin the endpoint so unit-diagonal correlations map to exactly 1.
        return 1.0;
    }
    (libm::exp(a) - 1.0) / (core::f64::consts::E - 1.0)
}

pub fn build_graph_filter(c: &CorrelationMatrix) -> GraphFilter {
    build_graph_filter_with_mode(c, FilterMode::Exponential)
}

pub fn build_graph_filter_with_mode(c: &CorrelationMatrix, mode: FilterMode) -> GraphFilter {
    let src = c.entries();
    let entries = match mode {
        FilterMode::Exponential => src.map(exponential_weight),
        FilterMode::Absolute => src.map(libm::fabs),
    };
    GraphFilter { entries }
}

impl GraphFilter {
    /// Reconstruct from a stored matrix (checkpoint loading).
    pub fn from_entries(entries: Matrix) -> Result<Self, CoreError> {
        if entries.rows() != entries.cols() {
            return Err(CoreError::ShapeMismatch {
                op: "graph_filter",
                left: entries.shape(),
                right: (entries.rows(), entries.rows()),
            });
        }
        for i in 0..entries.rows() {
            for j in 0..entries.cols() {
                let v = entries.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(CoreError::OutOfRange {
                        value: v,
                        lo: 0.0,
                        hi: 1.0,
                    });
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn n_farms(&self) -> usize {
        self.entries.rows()
    }
}
