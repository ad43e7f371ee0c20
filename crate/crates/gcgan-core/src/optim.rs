//! Bias-corrected moment-adaptive gradient updates (Adam).

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one parameter group. Each group keeps its own
/// state; updating one group never touches another.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    step: u64,
    moments: Vec<(Matrix, Matrix)>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update to every parameter matrix in the group.
    pub fn step(
        &mut self,
        config: &AdamConfig,
        params: &mut [&mut Matrix],
        grads: &[&Matrix],
    ) -> Result<(), CoreError> {
        if params.len() != grads.len() {
            return Err(CoreError::ShapeMismatch {
                op: "adam_step",
                left: (params.len(), 1),
                right: (grads.len(), 1),
            });
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (Matrix::zeros(p.rows(), p.cols()), Matrix::zeros(p.rows(), p.cols())))
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(CoreError::ShapeMismatch {
                op: "adam_step",
                left: (self.moments.len(), 1),
                right: (params.len(), 1),
            });
        }
        for g in grads {
            if !g.is_finite() {
                return Err(CoreError::NonFiniteGradient);
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(config.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(config.beta2, t as f64);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.moments.iter_mut())
        {
            if p.shape() != g.shape() {
                return Err(CoreError::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i];
                md[i] = config.beta1 * md[i] + (1.0 - config.beta1) * gi;
                vd[i] = config.beta2 * vd[i] + (1.0 - config.beta2) * gi * gi;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= config.learning_rate * m_hat / (libm::sqrt(v_hat) + config.epsilon);
            }
        }
        Ok(())
    }
}
