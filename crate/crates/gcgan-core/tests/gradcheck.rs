//! Analytic gradients vs central finite differences for every
//! differentiable tape operation and for a full generator + discriminator
//! composition.

use gcgan_core::graph::{build_graph_filter, GraphFilter};
use gcgan_core::loss::{discriminator_loss, generator_loss};
use gcgan_core::matrix::Matrix;
use gcgan_core::model::{Discriminator, Generator, ModelVariant};
use gcgan_core::stats::CorrelationMatrix;
use gcgan_core::tape::{ActivationKind, NodeId, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

/// Build a scalar loss from leaves created in order from `inputs`.
type LossBuilder = dyn Fn(&mut Tape, &[Matrix]) -> (Vec<NodeId>, NodeId);

fn loss_value(build: &LossBuilder, inputs: &[Matrix]) -> f64 {
    let mut tape = Tape::new();
    let (_, loss) = build(&mut tape, inputs);
    tape.value(loss).get(0, 0)
}

/// Max relative error between analytic and finite-difference gradients over
/// every entry of every input.
fn max_rel_error(build: &LossBuilder, inputs: &[Matrix]) -> f64 {
    let mut tape = Tape::new();
    let (leaves, loss) = build(&mut tape, inputs);
    let grads = tape.backward(loss).unwrap();

    let mut worst = 0.0f64;
    for (idx, input) in inputs.iter().enumerate() {
        let analytic = grads.get(leaves[idx]);
        for e in 0..input.data().len() {
            let mut plus = inputs.to_vec();
            plus[idx].data_mut()[e] += H;
            let mut minus = inputs.to_vec();
            minus[idx].data_mut()[e] -= H;
            let fd = (loss_value(build, &plus) - loss_value(build, &minus)) / (2.0 * H);
            let a = analytic.data()[e];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-2);
            worst = worst.max(rel);
        }
    }
    worst
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    // Entries in [-1, 1], nudged away from zero so ReLU-style kinks are at
    // least 1e-3 from the finite-difference stencil.
    Matrix::from_fn(rows, cols, |_, _| {
        let v: f64 = rng.gen::<f64>() * 2.0 - 1.0;
        if v.abs() < 1e-3 {
            v + 2e-3
        } else {
            v
        }
    })
}

#[test]
fn matmul_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..5 {
        let a = random_matrix(&mut rng, 3, 4);
        let b = random_matrix(&mut rng, 4, 2);
        let build: Box<LossBuilder> = Box::new(|t, inputs| {
            let a = t.leaf(inputs[0].clone());
            let b = t.leaf(inputs[1].clone());
            let p = t.matmul(a, b).unwrap();
            let m = t.mean_all(p);
            (vec![a, b], m)
        });
        assert!(max_rel_error(&build, &[a, b]) < TOL);
    }
}

#[test]
fn activation_gradients() {
    let kinds = [
        ActivationKind::Relu,
        ActivationKind::LeakyRelu { slope: 0.2 },
        ActivationKind::Tanh,
        ActivationKind::Sigmoid,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for kind in kinds {
        let x = random_matrix(&mut rng, 4, 5);
        let build: Box<LossBuilder> = Box::new(move |t, inputs| {
            let x = t.leaf(inputs[0].clone());
            let y = t.activation(x, kind);
            // tanh of the mean keeps the loss nonlinear in the output.
            let m = t.mean_all(y);
            let l = t.activation(m, ActivationKind::Tanh);
            (vec![x], l)
        });
        assert!(max_rel_error(&build, &[x]) < TOL, "kind {kind:?}");
    }
}

#[test]
fn conv1d_gradients_in_x_and_w() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for m_half in [0usize, 1, 3] {
        let x = random_matrix(&mut rng, 3, 9);
        let w = random_matrix(&mut rng, 1, 2 * m_half + 1);
        let build: Box<LossBuilder> = Box::new(|t, inputs| {
            let x = t.leaf(inputs[0].clone());
            let w = t.leaf(inputs[1].clone());
            let c = t.conv1d_rows(x, w).unwrap();
            let a = t.activation(c, ActivationKind::Tanh);
            let m = t.mean_all(a);
            (vec![x, w], m)
        });
        assert!(max_rel_error(&build, &[x, w]) < TOL, "m_half {m_half}");
    }
}

#[test]
fn resize_gradients_up_and_down() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for (k_in, k_out) in [(4usize, 9usize), (9, 4), (1, 5), (6, 6)] {
        let x = random_matrix(&mut rng, 3, k_in);
        let build: Box<LossBuilder> = Box::new(move |t, inputs| {
            let x = t.leaf(inputs[0].clone());
            let r = t.resize_temporal(x, k_out).unwrap();
            let a = t.activation(r, ActivationKind::Sigmoid);
            let m = t.mean_all(a);
            (vec![x], m)
        });
        assert!(max_rel_error(&build, &[x]) < TOL, "{k_in}->{k_out}");
    }
}

#[test]
fn reduction_log_add_affine_clamp_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let x = random_matrix(&mut rng, 4, 3).map(|v| v.abs() + 0.5); // positive for log
    let y = random_matrix(&mut rng, 4, 3);
    let build: Box<LossBuilder> = Box::new(|t, inputs| {
        let x = t.leaf(inputs[0].clone());
        let y = t.leaf(inputs[1].clone());
        let lx = t.log(x).unwrap();
        let s = t.add(lx, y).unwrap();
        let sc = t.affine(s, 0.7, -0.1);
        let c = t.clamp(sc, -10.0, 10.0); // inactive clamp passes gradient
        let pooled = t.mean_rows(c);
        let m = t.mean_all(pooled);
        (vec![x, y], m)
    });
    assert!(max_rel_error(&build, &[x, y]) < TOL);
}

fn small_filter(n: usize, seed: u64) -> GraphFilter {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Matrix::identity(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.gen::<f64>() * 0.9;
            c.set(i, j, v);
            c.set(j, i, v);
        }
    }
    build_graph_filter(&CorrelationMatrix::new(c).unwrap())
}

/// Full adversarial composition: 3-layer Conv1d generator and
/// discriminator, checked over 20 seeds for both losses.
#[test]
fn full_composition_gradients_20_seeds() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3;
        let filter = small_filter(n, seed + 500);
        let disc = Discriminator::new(
            filter.clone(),
            ModelVariant::Conv1d,
            &[12, 8, 5, 2],
            &[3, 2, 1],
            0.2,
            &mut rng,
        )
        .unwrap();
        let x_real = random_matrix(&mut rng, n, 12).map(libm::tanh);

        // Redraw inits whose ReLU layers go fully dead: an all-zero fake
        // parks the discriminator's leaky-ReLU inputs exactly on the kink,
        // which the finite-difference property excludes by construction.
        let (gen, z) = loop {
            let gen = Generator::new(
                filter.clone(),
                ModelVariant::Conv1d,
                &[2, 5, 8, 12],
                &[1, 2, 3],
                &mut rng,
            )
            .unwrap();
            let z = random_matrix(&mut rng, n, 2);
            let fake = gen.forward(&z).unwrap();
            // Dead ReLU regions leave exact zeros in the fake, which put
            // downstream leaky-ReLU inputs on their kink.
            let min_abs = fake.data().iter().fold(f64::MAX, |m, v| m.min(v.abs()));
            if min_abs > 1e-3 {
                break (gen, z);
            }
        };

        // Inputs: z, all generator weights, all discriminator weights.
        let mut inputs = vec![z.clone()];
        inputs.extend(gen.weights().into_iter().cloned());
        inputs.extend(disc.weights().into_iter().cloned());

        let g = gen.clone();
        let d = disc.clone();
        let build_gen: Box<LossBuilder> = Box::new(move |t, inputs| {
            let (mut gm, mut dm) = (g.clone(), d.clone());
            let mut it = inputs.iter().cloned();
            let z = it.next().unwrap();
            for w in gm.weights_mut() {
                *w = it.next().unwrap();
            }
            for w in dm.weights_mut() {
                *w = it.next().unwrap();
            }
            let zn = t.leaf(z);
            let gp = gm.forward_on(t, zn).unwrap();
            let dp = dm.forward_on(t, gp.output).unwrap();
            let loss = generator_loss(t, dp.output, 1e-7).unwrap();
            let mut leaves = vec![zn];
            leaves.extend(gp.weight_nodes);
            leaves.extend(dp.weight_nodes);
            (leaves, loss)
        });
        let err = max_rel_error(&build_gen, &inputs);
        assert!(err < TOL, "generator path seed {seed}: {err}");

        // Discriminator objective on a detached fake plus a real sample;
        // both passes share one set of weight leaves.
        let fake = gen.forward(&z).unwrap();
        let mut d_inputs = vec![x_real.clone(), fake];
        d_inputs.extend(disc.weights().into_iter().cloned());
        let d2 = disc.clone();
        let build_disc: Box<LossBuilder> = Box::new(move |t, inputs| {
            let mut dm = d2.clone();
            let mut it = inputs.iter().cloned();
            let real = it.next().unwrap();
            let fake = it.next().unwrap();
            for w in dm.weights_mut() {
                *w = it.next().unwrap();
            }
            let rn = t.leaf(real);
            let fnode = t.leaf(fake);
            let pair = dm.forward_pair_on(t, rn, fnode).unwrap();
            let loss = discriminator_loss(t, pair.real, pair.fake, 1e-7).unwrap();
            let mut leaves = vec![rn, fnode];
            leaves.extend(pair.weight_nodes);
            (leaves, loss)
        });
        let err_d = max_rel_error(&build_disc, &d_inputs);
        assert!(err_d < TOL, "discriminator path seed {seed}: {err_d}");
    }
}
