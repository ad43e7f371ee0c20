//! Adversarial training driver and checkpointing.
//!
//! The spatial filter is computed once from the training record and frozen;
//! only the temporal filter weights (and the discriminator readout) are
//! updated. Each inner step draws a fresh real window and a fresh noise
//! matrix, takes one or more discriminator updates on a detached fake, then
//! one generator update through the composed generator-discriminator graph.

use std::path::Path;
use std::time::Instant;

use gcgan_core::graph::build_graph_filter_with_mode;
use gcgan_core::loss::{discriminator_loss, generator_loss, generator_loss_nonsaturating};
use gcgan_core::matrix::Matrix;
use gcgan_core::model::{Discriminator, Generator, ModelVariant};
use gcgan_core::stats::estimate_correlation;
use gcgan_core::tape::Tape;
use gcgan_core::{sample_noise, AdamConfig, AdamState, FilterMode, NoiseDistribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_windows_with_rng, DataError, Dataset};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Core(#[from] gcgan_core::CoreError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("non-finite loss at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("checkpoint parse error: {0}")]
    Checkpoint(String),
}

/// Network architecture shared by training and checkpoint loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    pub filter_mode: FilterMode,
    /// Per-layer temporal widths, starting at the noise dimension.
    pub gen_widths: Vec<usize>,
    /// Conv half-widths, one per generator transition.
    pub gen_half_widths: Vec<usize>,
    pub disc_widths: Vec<usize>,
    pub disc_half_widths: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: ModelVariant::Conv1d,
            filter_mode: FilterMode::Exponential,
            gen_widths: vec![5, 180, 720, 2880],
            gen_half_widths: vec![12, 72, 144],
            disc_widths: vec![2880, 720, 180, 5],
            disc_half_widths: vec![144, 72, 5],
            leaky_slope: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.gen_widths.len() < 2 || self.disc_widths.len() < 2 {
            return Err(TrainError::Config(
                "generator and discriminator need at least one transition".into(),
            ));
        }
        if self.gen_widths.last() != self.disc_widths.first() {
            return Err(TrainError::Config(format!(
                "generator horizon {} does not match discriminator input width {}",
                self.gen_widths.last().unwrap(),
                self.disc_widths.first().unwrap()
            )));
        }
        Ok(())
    }

    /// Scenario length in time steps.
    pub fn horizon(&self) -> usize {
        *self.gen_widths.last().unwrap()
    }
}

/// Stop when both epoch losses have been flat for `patience` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    pub patience: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Discriminator updates per generator update.
    pub d_steps_per_g_step: usize,
    /// Real windows drawn per epoch; each drives one inner step.
    pub windows_per_epoch: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    /// Probability clamp before logs, in `(0, 0.01]`.
    pub clamp_eps: f64,
    pub noise: NoiseDistribution,
    /// Use `-log D(G(Z))` for the generator instead of `log(1 - D(G(Z)))`.
    pub nonsaturating: bool,
    pub seed: u64,
    pub early_stop: Option<EarlyStop>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            d_steps_per_g_step: 1,
            windows_per_epoch: 8,
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            clamp_eps: 1e-7,
            noise: NoiseDistribution::Gaussian,
            nonsaturating: false,
            seed: 0,
            early_stop: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.clamp_eps > 0.0 && self.clamp_eps <= 0.01) {
            return Err(TrainError::Config(format!(
                "clamp_eps {} outside (0, 0.01]",
                self.clamp_eps
            )));
        }
        if self.learning_rate <= 0.0 {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if self.d_steps_per_g_step == 0 || self.windows_per_epoch == 0 {
            return Err(TrainError::Config(
                "d_steps_per_g_step and windows_per_epoch must be at least 1".into(),
            ));
        }
        if let Some(es) = &self.early_stop {
            if es.patience == 0 || es.tolerance <= 0.0 {
                return Err(TrainError::Config("invalid early_stop".into()));
            }
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// Per-epoch training diagnostics; losses and accuracies are epoch means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub d_acc_real: f64,
    pub d_acc_fake: f64,
    pub seconds: f64,
}

/// Stream cipher RNG position, enough to reconstruct the exact stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Full training state: enough to generate scenarios and to resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub gen_opt: AdamState,
    pub disc_opt: AdamState,
    pub farm_ids: Vec<String>,
    pub capacities: Vec<f64>,
    pub interval_minutes: f64,
    pub rng: RngState,
    pub epochs_completed: usize,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| TrainError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(TrainError::Checkpoint(format!(
                "unsupported format version {}",
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }
}

pub struct TrainResult {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
}

/// Build the frozen filter from the record and initialize both networks.
fn build_models(
    dataset: &Dataset,
    model: &ModelConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Generator, Discriminator), TrainError> {
    let corr = estimate_correlation(&dataset.values)?;
    let filter = build_graph_filter_with_mode(&corr, model.filter_mode);
    let gen = Generator::new(
        filter.clone(),
        model.variant,
        &model.gen_widths,
        &model.gen_half_widths,
        rng,
    )?;
    let disc = Discriminator::new(
        filter,
        model.variant,
        &model.disc_widths,
        &model.disc_half_widths,
        model.leaky_slope,
        rng,
    )?;
    Ok((gen, disc))
}

pub fn train(
    dataset: &Dataset,
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainResult, TrainError> {
    train_with_progress(dataset, model, config, |_| {})
}

pub fn train_with_progress(
    dataset: &Dataset,
    model: &ModelConfig,
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainResult, TrainError> {
    model.validate()?;
    config.validate()?;
    dataset.validate()?;
    let t_window = model.horizon();
    if t_window > dataset.t_total() {
        return Err(TrainError::Config(format!(
            "horizon {} exceeds record length {}",
            t_window,
            dataset.t_total()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut gen, mut disc) = build_models(dataset, model, &mut rng)?;
    let mut gen_opt = AdamState::new();
    let mut disc_opt = AdamState::new();
    let adam = config.adam();
    let n = dataset.n_farms();
    let noise_dim = gen.noise_dim;

    let mut history: Vec<EpochRecord> = Vec::with_capacity(config.epochs);
    let mut epochs_completed = 0;
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let windows =
            sample_windows_with_rng(dataset, t_window, config.windows_per_epoch, &mut rng)?;
        let mut d_loss_sum = 0.0;
        let mut g_loss_sum = 0.0;
        let mut acc_real_sum = 0.0;
        let mut acc_fake_sum = 0.0;
        let mut d_steps = 0usize;
        for real in &windows {
            for _ in 0..config.d_steps_per_g_step {
                let z = sample_noise(n, noise_dim, config.noise, &mut rng);
                // Detached fake: the generator sees no gradient from this step.
                let fake = gen.forward(&z)?;
                let mut tape = Tape::new();
                let rn = tape.leaf(real.clone());
                let fnode = tape.leaf(fake);
                let pair = disc.forward_pair_on(&mut tape, rn, fnode)?;
                let loss = discriminator_loss(&mut tape, pair.real, pair.fake, config.clamp_eps)?;
                let loss_v = tape.value(loss).get(0, 0);
                if !loss_v.is_finite() {
                    return Err(TrainError::NonFinite { epoch });
                }
                d_loss_sum += loss_v;
                acc_real_sum += f64::from(tape.value(pair.real).get(0, 0) > 0.5);
                acc_fake_sum += f64::from(tape.value(pair.fake).get(0, 0) < 0.5);
                d_steps += 1;
                let grads = tape.backward(loss)?;
                let gs: Vec<&Matrix> = pair.weight_nodes.iter().map(|&w| grads.get(w)).collect();
                disc_opt.step(&adam, &mut disc.weights_mut(), &gs)?;
            }

            let z = sample_noise(n, noise_dim, config.noise, &mut rng);
            let mut tape = Tape::new();
            let zn = tape.leaf(z);
            let gp = gen.forward_on(&mut tape, zn)?;
            let dp = disc.forward_on(&mut tape, gp.output)?;
            let loss = if config.nonsaturating {
                generator_loss_nonsaturating(&mut tape, dp.output, config.clamp_eps)?
            } else {
                generator_loss(&mut tape, dp.output, config.clamp_eps)?
            };
            let loss_v = tape.value(loss).get(0, 0);
            if !loss_v.is_finite() {
                return Err(TrainError::NonFinite { epoch });
            }
            g_loss_sum += loss_v;
            let grads = tape.backward(loss)?;
            let gs: Vec<&Matrix> = gp.weight_nodes.iter().map(|&w| grads.get(w)).collect();
            gen_opt.step(&adam, &mut gen.weights_mut(), &gs)?;
        }

        let record = EpochRecord {
            epoch,
            d_loss: d_loss_sum / d_steps as f64,
            g_loss: g_loss_sum / windows.len() as f64,
            d_acc_real: acc_real_sum / d_steps as f64,
            d_acc_fake: acc_fake_sum / d_steps as f64,
            seconds: started.elapsed().as_secs_f64(),
        };
        progress(&record);
        history.push(record);
        epochs_completed = epoch + 1;
        if let Some(es) = &config.early_stop {
            if losses_flat(&history, es) {
                break;
            }
        }
    }

    let checkpoint = Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        model: model.clone(),
        train: config.clone(),
        generator: gen,
        discriminator: disc,
        gen_opt,
        disc_opt,
        farm_ids: dataset.farm_ids.clone(),
        capacities: dataset.capacities.clone(),
        interval_minutes: dataset.interval_minutes,
        rng: RngState::capture(&rng),
        epochs_completed,
    };
    Ok(TrainResult {
        checkpoint,
        history,
    })
}

/// Both loss ranges over the last `patience` epochs below tolerance.
fn losses_flat(history: &[EpochRecord], es: &EarlyStop) -> bool {
    if history.len() < es.patience + 1 {
        return false;
    }
    let tail = &history[history.len() - es.patience - 1..];
    let range = |f: fn(&EpochRecord) -> f64| {
        let lo = tail.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = tail.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    range(|r| r.d_loss) < es.tolerance && range(|r| r.g_loss) < es.tolerance
}

/// Write the per-epoch diagnostics CSV.
pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<(), TrainError> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| {
        TrainError::Io {
            path: path.display().to_string(),
            source: e,
        }
    })?);
    (|| -> std::io::Result<()> {
        writeln!(out, "epoch,d_loss,g_loss,d_acc_real,d_acc_fake,seconds")?;
        for r in history {
            writeln!(
                out,
                "{},{},{},{},{},{:.3}",
                r.epoch, r.d_loss, r.g_loss, r.d_acc_real, r.d_acc_fake, r.seconds
            )?;
        }
        out.flush()
    })()
    .map_err(|e| TrainError::Io {
        path: path.display().to_string(),
        source: e,
    })
}
