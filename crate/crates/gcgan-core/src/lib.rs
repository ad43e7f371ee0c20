//! Core numerics for graph-convolutional adversarial wind-power scenario
//! generation.
//!
//! The crate is `no_std` (with `alloc`) and carries no IO: dense matrix
//! autodiff, the correlation-derived spatial graph filter, the generator
//! and discriminator stacks with 1D-convolutional or full-matrix temporal
//! filters, adversarial losses, the Adam optimizer, and the statistical
//! fits used to score generated scenarios. File formats, training
//! orchestration, and the CLI live in the companion `gcgan-cli` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod graph;
pub mod loss;
pub mod matrix;
pub mod model;
pub mod noise;
pub mod optim;
pub mod stats;
pub mod tape;

pub use error::CoreError;
pub use graph::{build_graph_filter, build_graph_filter_with_mode, FilterMode, GraphFilter};
pub use matrix::Matrix;
pub use model::{Discriminator, Generator, LayerSpec, ModelVariant};
pub use noise::{sample_noise, NoiseDistribution};
pub use optim::{AdamConfig, AdamState};
pub use stats::CorrelationMatrix;
pub use tape::{ActivationKind, Gradients, NodeId, Tape};
