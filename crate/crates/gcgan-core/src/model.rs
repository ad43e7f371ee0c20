//! Generator and discriminator built from graph-convolutional layers.
//!
//! Each layer computes `sigma(A * X * W)` where `A` is the fixed spatial
//! mixing matrix and `W` is the trainable temporal filter. The filter is
//! either a full `k_in x k_out` matrix or a single 1D convolution kernel of
//! length `2M+1`; in the convolutional variant the width change is realized
//! by linear resampling of the rows before the convolution.

use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::graph::GraphFilter;
use crate::matrix::Matrix;
use crate::tape::{ActivationKind, NodeId, Tape};

/// Shape and nonlinearity of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub k_in: usize,
    pub k_out: usize,
    /// Convolution half-width M; ignored by the full-matrix variant.
    pub m_half_width: usize,
    pub activation: ActivationKind,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.k_in == 0 || self.k_out == 0 {
            return Err(CoreError::InvalidConfig(String::from(
                "layer widths must be at least 1",
            )));
        }
        if self.m_half_width > self.k_out {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "conv half-width {} exceeds output width {}",
                self.m_half_width,
                self.k_out
            )));
        }
        if let ActivationKind::LeakyRelu { slope } = self.activation {
            if !(0.0..1.0).contains(&slope) || slope == 0.0 {
                return Err(CoreError::InvalidConfig(alloc::format!(
                    "leaky relu slope {slope} outside (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Which temporal filter parameterization a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    Conv1d,
    FullMatrix,
}

/// One layer's spec together with its trainable weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnLayer {
    pub spec: LayerSpec,
    /// `k_in x k_out` for FullMatrix, `1 x (2M+1)` for Conv1d.
    pub weights: Matrix,
}

fn init_layer(
    spec: LayerSpec,
    variant: ModelVariant,
    rng: &mut impl Rng,
) -> Result<GcnLayer, CoreError> {
    spec.validate()?;
    let weights = match variant {
        ModelVariant::FullMatrix => {
            let s = libm::sqrt(6.0 / (spec.k_in + spec.k_out) as f64);
            Matrix::from_fn(spec.k_in, spec.k_out, |_, _| uniform(rng, s))
        }
        ModelVariant::Conv1d => {
            let len = 2 * spec.m_half_width + 1;
            let s = libm::sqrt(6.0 / (2 * spec.m_half_width + 2) as f64);
            Matrix::from_fn(1, len, |_, _| uniform(rng, s))
        }
    };
    Ok(GcnLayer { spec, weights })
}

fn uniform(rng: &mut impl Rng, s: f64) -> f64 {
    (rng.gen::<f64>() * 2.0 - 1.0) * s
}

/// Forward one GCN layer on a tape. `a` is the graph-filter node, `w` the
/// weight leaf, `x` the input. Returns the activated output node.
pub fn layer_forward(
    tape: &mut Tape,
    spec: &LayerSpec,
    variant: ModelVariant,
    a: NodeId,
    w: NodeId,
    x: NodeId,
) -> Result<NodeId, CoreError> {
    if tape.value(x).cols() != spec.k_in {
        return Err(CoreError::ShapeMismatch {
            op: "layer_forward",
            left: tape.value(x).shape(),
            right: (tape.value(x).rows(), spec.k_in),
        });
    }
    let filtered = match variant {
        ModelVariant::FullMatrix => {
            let ax = tape.matmul(a, x)?;
            tape.matmul(ax, w)?
        }
        ModelVariant::Conv1d => {
            let resized = tape.resize_temporal(x, spec.k_out)?;
            let conv = tape.conv1d_rows(resized, w)?;
            tape.matmul(a, conv)?
        }
    };
    Ok(tape.activation(filtered, spec.activation))
}

/// Node ids produced by one forward pass, aligned with `weights()` order.
pub struct ForwardPass {
    pub output: NodeId,
    pub weight_nodes: Vec<NodeId>,
}

/// Discriminator outputs for a real/fake pair sharing one weight leafing.
pub struct PairPass {
    pub real: NodeId,
    pub fake: NodeId,
    pub weight_nodes: Vec<NodeId>,
}

/// Maps noise `N x K` to scenarios `N x T` in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub filter: GraphFilter,
    pub variant: ModelVariant,
    pub layers: Vec<GcnLayer>,
    pub noise_dim: usize,
    pub n_farms: usize,
    pub horizon: usize,
}

impl Generator {
    /// Build with ReLU hidden layers and a tanh output layer. `widths`
    /// lists the per-layer feature counts starting at the noise dimension;
    /// `m_half_widths` gives one conv half-width per transition.
    pub fn new(
        filter: GraphFilter,
        variant: ModelVariant,
        widths: &[usize],
        m_half_widths: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self, CoreError> {
        let layers = build_layers(
            variant,
            widths,
            m_half_widths,
            ActivationKind::Relu,
            ActivationKind::Tanh,
            rng,
        )?;
        Ok(Self {
            n_farms: filter.n_farms(),
            noise_dim: widths[0],
            horizon: *widths.last().unwrap(),
            filter,
            variant,
            layers,
        })
    }

    pub fn forward_on(&self, tape: &mut Tape, z: NodeId) -> Result<ForwardPass, CoreError> {
        let a = tape.leaf(self.filter.entries().clone());
        let mut weight_nodes = Vec::with_capacity(self.layers.len());
        let mut x = z;
        for layer in &self.layers {
            let w = tape.leaf(layer.weights.clone());
            weight_nodes.push(w);
            x = layer_forward(tape, &layer.spec, self.variant, a, w, x)?;
        }
        Ok(ForwardPass {
            output: x,
            weight_nodes,
        })
    }

    /// Forward pass on a throwaway tape; returns the output value only.
    pub fn forward(&self, z: &Matrix) -> Result<Matrix, CoreError> {
        let mut tape = Tape::new();
        let zn = tape.leaf(z.clone());
        let pass = self.forward_on(&mut tape, zn)?;
        Ok(tape.value(pass.output).clone())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.data().len()).sum()
    }

    pub fn weights(&self) -> Vec<&Matrix> {
        self.layers.iter().map(|l| &l.weights).collect()
    }

    pub fn weights_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().map(|l| &mut l.weights).collect()
    }
}

/// Scores an `N x T` scenario with a probability strictly inside `(0, 1)`.
///
/// The GCN stack reduces the temporal width; a node-mean over the farm rows
/// followed by a trainable linear readout and a sigmoid forms the scalar
/// decision, which keeps the output consistent under farm relabeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub filter: GraphFilter,
    pub variant: ModelVariant,
    pub layers: Vec<GcnLayer>,
    pub readout_weight: Matrix,
    pub readout_bias: Matrix,
}

impl Discriminator {
    pub fn new(
        filter: GraphFilter,
        variant: ModelVariant,
        widths: &[usize],
        m_half_widths: &[usize],
        leaky_slope: f64,
        rng: &mut impl Rng,
    ) -> Result<Self, CoreError> {
        let hidden = ActivationKind::LeakyRelu { slope: leaky_slope };
        let layers = build_layers(variant, widths, m_half_widths, hidden, hidden, rng)?;
        for pair in widths.windows(2) {
            if pair[1] >= pair[0] {
                return Err(CoreError::InvalidConfig(String::from(
                    "discriminator widths must decrease",
                )));
            }
        }
        let k_last = *widths.last().unwrap();
        let s = libm::sqrt(6.0 / (k_last + 1) as f64);
        let readout_weight = Matrix::from_fn(k_last, 1, |_, _| uniform(rng, s));
        let readout_bias = Matrix::zeros(1, 1);
        Ok(Self {
            filter,
            variant,
            layers,
            readout_weight,
            readout_bias,
        })
    }

    fn leaf_weights(&self, tape: &mut Tape) -> Vec<NodeId> {
        let mut nodes: Vec<NodeId> = self
            .layers
            .iter()
            .map(|l| tape.leaf(l.weights.clone()))
            .collect();
        nodes.push(tape.leaf(self.readout_weight.clone()));
        nodes.push(tape.leaf(self.readout_bias.clone()));
        nodes
    }

    fn forward_given(
        &self,
        tape: &mut Tape,
        a: NodeId,
        weight_nodes: &[NodeId],
        x: NodeId,
    ) -> Result<NodeId, CoreError> {
        let mut h = x;
        for (layer, &w) in self.layers.iter().zip(weight_nodes) {
            h = layer_forward(tape, &layer.spec, self.variant, a, w, h)?;
        }
        let pooled = tape.mean_rows(h);
        let rw = weight_nodes[self.layers.len()];
        let rb = weight_nodes[self.layers.len() + 1];
        let lin = tape.matmul(pooled, rw)?;
        let biased = tape.add(lin, rb)?;
        Ok(tape.activation(biased, ActivationKind::Sigmoid))
    }

    pub fn forward_on(&self, tape: &mut Tape, x: NodeId) -> Result<ForwardPass, CoreError> {
        let a = tape.leaf(self.filter.entries().clone());
        let weight_nodes = self.leaf_weights(tape);
        let output = self.forward_given(tape, a, &weight_nodes, x)?;
        Ok(ForwardPass {
            output,
            weight_nodes,
        })
    }

    /// Score a real and a fake sample with one shared set of weight leaves,
    /// so weight gradients from both passes accumulate on the same nodes.
    pub fn forward_pair_on(
        &self,
        tape: &mut Tape,
        x_real: NodeId,
        x_fake: NodeId,
    ) -> Result<PairPass, CoreError> {
        let a = tape.leaf(self.filter.entries().clone());
        let weight_nodes = self.leaf_weights(tape);
        let real = self.forward_given(tape, a, &weight_nodes, x_real)?;
        let fake = self.forward_given(tape, a, &weight_nodes, x_fake)?;
        Ok(PairPass {
            real,
            fake,
            weight_nodes,
        })
    }

    /// Probability that `x` is real, on a throwaway tape.
    pub fn forward(&self, x: &Matrix) -> Result<f64, CoreError> {
        let mut tape = Tape::new();
        let xn = tape.leaf(x.clone());
        let pass = self.forward_on(&mut tape, xn)?;
        Ok(tape.value(pass.output).get(0, 0))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len())
            .sum::<usize>()
            + self.readout_weight.data().len()
            + self.readout_bias.data().len()
    }

    pub fn weights(&self) -> Vec<&Matrix> {
        let mut v: Vec<&Matrix> = self.layers.iter().map(|l| &l.weights).collect();
        v.push(&self.readout_weight);
        v.push(&self.readout_bias);
        v
    }

    pub fn weights_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v: Vec<&mut Matrix> = self.layers.iter_mut().map(|l| &mut l.weights).collect();
        v.push(&mut self.readout_weight);
        v.push(&mut self.readout_bias);
        v
    }
}

fn build_layers(
    variant: ModelVariant,
    widths: &[usize],
    m_half_widths: &[usize],
    hidden: ActivationKind,
    last: ActivationKind,
    rng: &mut impl Rng,
) -> Result<Vec<GcnLayer>, CoreError> {
    if widths.is_empty() {
        return Err(CoreError::InvalidConfig(String::from(
            "at least one layer width required",
        )));
    }
    let transitions = widths.len() - 1;
    if variant == ModelVariant::Conv1d && m_half_widths.len() != transitions {
        return Err(CoreError::InvalidConfig(alloc::format!(
            "{} conv half-widths for {} transitions",
            m_half_widths.len(),
            transitions
        )));
    }
    let mut layers = Vec::with_capacity(transitions);
    for i in 0..transitions {
        let spec = LayerSpec {
            k_in: widths[i],
            k_out: widths[i + 1],
            m_half_width: m_half_widths.get(i).copied().unwrap_or(0),
            activation: if i + 1 == transitions { last } else { hidden },
        };
        layers.push(init_layer(spec, variant, rng)?);
    }
    Ok(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph_filter, GraphFilter};
    use crate::stats::CorrelationMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_filter(n: usize) -> GraphFilter {
        GraphFilter::from_entries(Matrix::identity(n)).unwrap()
    }

    fn test_filter(n: usize) -> GraphFilter {
        let c = Matrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else {
                0.4 / (1.0 + (i as f64 - j as f64).abs())
            }
        });
        build_graph_filter(&CorrelationMatrix::new(c).unwrap())
    }

    #[test]
    fn full_matrix_identity_composition() {
        let spec = LayerSpec {
            k_in: 3,
            k_out: 3,
            m_half_width: 0,
            activation: ActivationKind::Relu,
        };
        let layer = GcnLayer {
            spec,
            weights: Matrix::identity(3),
        };
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::identity(2));
        let x = tape.leaf(Matrix::from_rows(&[&[0.1, 0.2, 0.3], &[0.4, 0.5, 0.6]]).unwrap());
        let w = tape.leaf(layer.weights.clone());
        let out = layer_forward(&mut tape, &spec, ModelVariant::FullMatrix, a, w, x).unwrap();
        assert!(tape.value(out).max_abs_diff(tape.value(x)) < 1e-15);
    }

    #[test]
    fn conv_identity_filter_composition() {
        let spec = LayerSpec {
            k_in: 4,
            k_out: 4,
            m_half_width: 0,
            activation: ActivationKind::Relu,
        };
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::identity(2));
        let x = tape.leaf(Matrix::from_fn(2, 4, |i, j| (1 + i + j) as f64 * 0.1));
        let w = tape.leaf(Matrix::filled(1, 1, 1.0));
        let out = layer_forward(&mut tape, &spec, ModelVariant::Conv1d, a, w, x).unwrap();
        assert!(tape.value(out).max_abs_diff(tape.value(x)) < 1e-15);
    }

    #[test]
    fn rank_one_mixing_forces_equal_rows() {
        let n = 4;
        let spec = LayerSpec {
            k_in: 5,
            k_out: 5,
            m_half_width: 1,
            activation: ActivationKind::Tanh,
        };
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::filled(n, n, 1.0 / n as f64));
        let x = tape.leaf(Matrix::from_fn(n, 5, |i, j| libm::sin((i * 5 + j) as f64)));
        let w = tape.leaf(Matrix::from_rows(&[&[0.2, 0.5, 0.3]]).unwrap());
        let out = layer_forward(&mut tape, &spec, ModelVariant::Conv1d, a, w, x).unwrap();
        let v = tape.value(out);
        for i in 1..n {
            for j in 0..5 {
                assert!((v.get(i, j) - v.get(0, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn generator_range_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Generator::new(
            test_filter(3),
            ModelVariant::Conv1d,
            &[4, 8, 16],
            &[1, 3],
            &mut rng,
        )
        .unwrap();
        let z = Matrix::from_fn(3, 4, |i, j| libm::cos((i * 4 + j) as f64) * 2.0);
        let out1 = g.forward(&z).unwrap();
        let out2 = g.forward(&z).unwrap();
        assert_eq!(out1, out2);
        assert!(out1.data().iter().all(|&v| (-1.0..=1.0).contains(&v)));
        assert_eq!(out1.shape(), (3, 16));
    }

    #[test]
    fn zero_parameters_give_zero_output_and_half_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = Generator::new(
            test_filter(2),
            ModelVariant::FullMatrix,
            &[3, 6],
            &[],
            &mut rng,
        )
        .unwrap();
        for w in g.weights_mut() {
            *w = Matrix::zeros(w.rows(), w.cols());
        }
        let out = g.forward(&Matrix::filled(2, 3, 0.7)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));

        let mut d = Discriminator::new(
            test_filter(2),
            ModelVariant::FullMatrix,
            &[6, 3],
            &[],
            0.2,
            &mut rng,
        )
        .unwrap();
        for w in d.weights_mut() {
            *w = Matrix::zeros(w.rows(), w.cols());
        }
        assert_eq!(d.forward(&Matrix::filled(2, 6, 0.4)).unwrap(), 0.5);
    }

    #[test]
    fn discriminator_output_strictly_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = Discriminator::new(
            test_filter(3),
            ModelVariant::Conv1d,
            &[12, 6, 2],
            &[3, 2],
            0.2,
            &mut rng,
        )
        .unwrap();
        for k in 0..10 {
            let x = Matrix::from_fn(3, 12, |i, j| libm::sin((k * 36 + i * 12 + j) as f64));
            let p = d.forward(&x).unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn permutation_equivariance_of_discriminator() {
        // Swapping farms while conjugating the filter by the same
        // permutation leaves the score unchanged.
        let n = 3;
        let perm = [2usize, 0, 1];
        let c = Matrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else {
                0.2 + 0.1 * ((i + j) as f64)
            }
        });
        let cm = CorrelationMatrix::new(
            Matrix::from_fn(n, n, |i, j| (c.get(i, j) + c.get(j, i)) / 2.0),
        )
        .unwrap();
        let filter = build_graph_filter(&cm);
        let permuted_entries =
            Matrix::from_fn(n, n, |i, j| filter.entries().get(perm[i], perm[j]));
        let permuted_filter = GraphFilter::from_entries(permuted_entries).unwrap();

        let d1 = Discriminator::new(
            filter,
            ModelVariant::Conv1d,
            &[10, 4],
            &[2],
            0.2,
            &mut ChaCha8Rng::seed_from_u64(21),
        )
        .unwrap();
        let mut d2 = d1.clone();
        d2.filter = permuted_filter;

        let x = Matrix::from_fn(n, 10, |i, j| libm::sin((i * 10 + j) as f64 * 0.7));
        let xp = Matrix::from_fn(n, 10, |i, j| x.get(perm[i], j));
        let p1 = d1.forward(&x).unwrap();
        let p2 = d2.forward(&xp).unwrap();
        assert!((p1 - p2).abs() < 1e-12);
    }

    #[test]
    fn parameter_counts_at_default_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let widths = [5usize, 180, 720, 2880];
        let full = Generator::new(
            identity_filter(2),
            ModelVariant::FullMatrix,
            &widths,
            &[],
            &mut rng,
        )
        .unwrap();
        assert_eq!(full.parameter_count(), 2_204_100);

        let m = [12usize, 72, 144];
        let conv = Generator::new(
            identity_filter(2),
            ModelVariant::Conv1d,
            &widths,
            &m,
            &mut rng,
        )
        .unwrap();
        let expected: usize = m.iter().map(|&mh| 2 * mh + 1).sum();
        assert_eq!(conv.parameter_count(), expected);
        assert!((conv.parameter_count() as f64) < 0.01 * full.parameter_count() as f64);

        // Degenerate single-width model has no trainable layers.
        let empty = Generator::new(
            identity_filter(2),
            ModelVariant::Conv1d,
            &[5],
            &[],
            &mut rng,
        )
        .unwrap();
        assert_eq!(empty.parameter_count(), 0);
    }

    #[test]
    fn rejects_oversized_conv_half_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let err = Discriminator::new(
            identity_filter(2),
            ModelVariant::Conv1d,
            &[180, 5],
            &[12],
            0.2,
            &mut rng,
        );
        assert!(matches!(err, Err(CoreError::InvalidConfig(_))));
    }
}
