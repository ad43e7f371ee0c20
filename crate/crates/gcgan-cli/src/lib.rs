//! IO, training orchestration, evaluation, and configuration for the
//! graph-convolutional wind scenario models in `gcgan-core`.

pub mod config;
pub mod data;
pub mod eval;
pub mod train;
